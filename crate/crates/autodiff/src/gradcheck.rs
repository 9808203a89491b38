//! Central finite-difference gradient checking.

use rand::Rng;

use crate::error::AutodiffError;
use crate::params::{ParamId, ParameterStore};
use crate::tape::{Tape, Var};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged by absolute error at that scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares tape gradients with `(f(p+ε) − f(p−ε)) / 2ε` on up to
/// `max_coords` randomly chosen trainable coordinates (all of them when the
/// model is smaller).
pub fn check_gradients<F, R, E>(
    store: &mut ParameterStore,
    loss_fn: F,
    eps: f64,
    max_coords: usize,
    rng: &mut R,
) -> std::result::Result<GradCheckReport, E>
where
    F: Fn(&Tape, &ParameterStore) -> std::result::Result<Var, E>,
    R: Rng + ?Sized,
    E: From<AutodiffError>,
{
    let tape = Tape::new();
    let loss = loss_fn(&tape, store)?;
    tape.backward(loss, store)?;

    let mut coords: Vec<(ParamId, usize)> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(id, p)| (0..p.value.len()).map(move |i| (id, i)))
        .collect();
    if coords.len() > max_coords {
        // partial Fisher-Yates
        for i in 0..max_coords {
            let j = rng.random_range(i..coords.len());
            coords.swap(i, j);
        }
        coords.truncate(max_coords);
    }

    let eval = |store: &ParameterStore| -> std::result::Result<f64, E> {
        let t = Tape::new();
        let l = loss_fn(&t, store)?;
        Ok(t.scalar(l))
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for (id, i) in coords {
        let analytic = store.grad(id).data()[i];
        let original = store.value(id).data()[i];
        store.value_mut(id)[i] = original + eps;
        let plus = eval(store)?;
        store.value_mut(id)[i] = original - eps;
        let minus = eval(store)?;
        store.value_mut(id)[i] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if err > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(err);
            if err >= report.max_rel_err {
                report.worst = Some((store.get(id).name.clone(), i, analytic, numeric));
            }
        }
    }
    Ok(report)
}
