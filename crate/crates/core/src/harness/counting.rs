use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::ClassifierError;
use crate::volume::{Classifier, ImageVolume, Label};

/// Counts every image passed to the wrapped classifier.
pub struct CountingClassifier<C> {
    inner: C,
    calls: AtomicUsize,
}

impl<C: Classifier> CountingClassifier<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: Classifier> Classifier for CountingClassifier<C> {
    fn labels(&self) -> &[Label] {
        self.inner.labels()
    }

    fn evaluate(&self, batch: &[&ImageVolume], label: &Label) -> Result<Vec<f64>, ClassifierError> {
        self.calls.fetch_add(batch.len(), Ordering::SeqCst);
        self.inner.evaluate(batch, label)
    }

    fn is_serial(&self) -> bool {
        self.inner.is_serial()
    }
}
