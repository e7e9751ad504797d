use super::{Graph, NumericsError, RngStream, Tensor, Var};

/// Denominator floor for the relative error, so that gradients that are zero
/// up to round-off are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Probe at most this many coordinates per parameter tensor (sampled
    /// without replacement); `None` probes every coordinate.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Max relative error per parameter tensor, in input order.
    pub per_param: Vec<f64>,
    /// `(param index, flat coordinate, analytic, numeric)` of the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub probes: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64, NumericsError>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>, NumericsError>,
{
    let g = Graph::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| g.constant(p.clone())).collect();
    let out = f(&g, &vars)?;
    let v = out.item();
    if !v.is_finite() {
        return Err(NumericsError::Probe(format!("loss evaluated to {v}")));
    }
    Ok(v)
}

/// Compares the analytic gradient of a scalar graph function against central
/// differences at every (or a sampled subset of) parameter coordinate.
pub fn gradient_check<F>(f: F, params: &[Tensor], config: &GradCheckConfig) -> Result<GradCheckReport, NumericsError>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>, NumericsError>,
{
    let g = Graph::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&g, &vars)?;
    if !loss.item().is_finite() {
        return Err(NumericsError::Probe(format!("loss evaluated to {}", loss.item())));
    }
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();
    drop(grads);

    let mut rng = RngStream::named(config.seed, "gradcheck");
    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_param: vec![0.0; params.len()],
        worst: None,
        probes: 0,
        passed: true,
    };
    for (pi, p) in params.iter().enumerate() {
        let mut coords: Vec<usize> = (0..p.len()).collect();
        if let Some(limit) = config.max_coords_per_param {
            if limit < coords.len() {
                rng.shuffle(&mut coords);
                coords.truncate(limit);
                coords.sort_unstable();
            }
        }
        for c in coords {
            let original = p.data()[c];
            probe[pi].data_mut()[c] = original + config.step;
            let plus = evaluate(&f, &probe)?;
            probe[pi].data_mut()[c] = original - config.step;
            let minus = evaluate(&f, &probe)?;
            probe[pi].data_mut()[c] = original;

            let numeric = (plus - minus) / (2.0 * config.step);
            let a = analytic[pi].data()[c];
            let err = relative_error(a, numeric);
            report.probes += 1;
            if err > report.per_param[pi] {
                report.per_param[pi] = err;
            }
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((pi, c, a, numeric));
            }
        }
    }
    report.passed = report.max_rel_error <= config.tolerance;
    Ok(report)
}
