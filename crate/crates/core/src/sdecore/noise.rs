use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Per-replica Gaussian stream keyed by `(master_seed, replica_id)`.
///
/// The replica id selects a ChaCha stream, so replicas never overlap and any
/// replica can be regenerated alone.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    master_seed: u64,
    replica_id: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(master_seed: u64, replica_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(replica_id);
        Self {
            master_seed,
            replica_id,
            counter: 0,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn replica_id(&self) -> u64 {
        self.replica_id
    }

    /// Number of standard normals drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.counter += 1;
        self.rng.sample(StandardNormal)
    }

    /// Two independent `N(0, dt)` increments.
    pub fn increments(&mut self, dt: f64) -> (f64, f64) {
        let s = dt.sqrt();
        let z1 = self.standard_normal();
        let z2 = self.standard_normal();
        (s * z1, s * z2)
    }

    pub fn uniform(&mut self) -> f64 {
        self.counter += 1;
        self.rng.random::<f64>()
    }
}
