use crate::numerics::DenseMatrix;
use crate::scalar::Scalar;

/// Counts live activation bytes. Callers report each matrix they allocate
/// with [`track`](Self::track) and hand it back with [`release`](Self::release)
/// when it goes out of use.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryMeter {
    current: usize,
    peak: usize,
}

impl MemoryMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc_bytes(&mut self, bytes: usize) {
        self.current += bytes;
        self.peak = self.peak.max(self.current);
    }

    pub fn free_bytes(&mut self, bytes: usize) {
        debug_assert!(bytes <= self.current, "freeing more than allocated");
        self.current = self.current.saturating_sub(bytes);
    }

    pub fn track<T: Scalar>(&mut self, m: DenseMatrix<T>) -> DenseMatrix<T> {
        self.alloc_bytes(m.byte_size());
        m
    }

    pub fn release<T: Scalar>(&mut self, m: DenseMatrix<T>) {
        self.free_bytes(m.byte_size());
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    /// Combines meters of independent workers: peaks take the max.
    pub fn merge_max(&mut self, other: &MemoryMeter) {
        self.peak = self.peak.max(other.peak);
        self.current = self.current.max(other.current);
    }
}
