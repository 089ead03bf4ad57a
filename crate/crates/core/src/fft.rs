//! Shared FFT plans, one pair per transform length.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use rustfft::{Fft, FftPlanner};

use crate::c64;

#[derive(Clone)]
pub(crate) struct Plans {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

fn cache() -> &'static RwLock<HashMap<usize, Plans>> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Plans>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Plans are inserted fully built under the write lock, so readers never see
/// a partial entry.
pub(crate) fn plans(n: usize) -> Plans {
    if let Some(p) = cache().read().expect("fft cache poisoned").get(&n) {
        return p.clone();
    }
    let mut guard = cache().write().expect("fft cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            }
        })
        .clone()
}

/// Unnormalized forward transform in place.
pub(crate) fn forward(buf: &mut [c64]) {
    plans(buf.len()).forward.process(buf);
}

/// Inverse transform in place, normalized by `1/N`.
pub(crate) fn inverse(buf: &mut [c64]) {
    plans(buf.len()).inverse.process(buf);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|v| *v *= s);
}
