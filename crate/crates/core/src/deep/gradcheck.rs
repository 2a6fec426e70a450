//! Central-difference check of `Network::backward`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::deep::net::Network;
use crate::error::Result;
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_err: f64,
    pub worst_param: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

fn objective(net: &Network, x: &Array2<f64>, upstream: &Array2<f64>) -> Result<f64> {
    let y = net.predict(x)?;
    Ok((&y * upstream).sum())
}

/// Compares analytic gradients of `sum(f(x) * u)` against central
/// differences at `probes` randomly chosen parameters. Inputs and upstream
/// are drawn from `rng`. Relative error is `|a - n| / max(|a| + |n|, 1e-7)`.
pub fn gradient_check(
    net: &mut Network,
    batch: usize,
    probes: usize,
    step: f64,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let x = Array2::from_shape_fn((batch, net.input_len()), |_| {
        rng::uniform_range(rng, -1.0, 1.0)
    });
    let upstream = Array2::from_shape_fn((batch, net.output_len()), |_| {
        rng::uniform_range(rng, -1.0, 1.0)
    });
    net.forward(&x)?;
    let analytic = net.backward(&upstream)?;
    let n = net.num_params();
    let mut flat = net.flat_params();
    let mut report = GradCheckReport {
        probes,
        max_rel_err: 0.0,
        worst_param: 0,
    };
    for _ in 0..probes {
        let i = rng::below(rng, n);
        let orig = flat[i];
        flat[i] = orig + step;
        net.set_flat_params(&flat)?;
        let plus = objective(net, &x, &upstream)?;
        flat[i] = orig - step;
        net.set_flat_params(&flat)?;
        let minus = objective(net, &x, &upstream)?;
        flat[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-7);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_param = i;
        }
    }
    net.set_flat_params(&flat)?;
    Ok(report)
}
