use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step, must lie in `[1e-7, 1e-3]`.
    pub eps: f64,
    /// Check at most this many coordinates, sampled uniformly over all
    /// parameters. `None` checks every coordinate.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// (parameter index, flat coordinate) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// `f` receives a fresh graph and one leaf per entry of `params` and must
/// return a scalar node. The relative error per coordinate is
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if !(1e-7..=1e-3).contains(&opts.eps) {
        return Err(Error::Config(format!("grad_check eps {} outside [1e-7, 1e-3]", opts.eps)));
    }

    let eval = |values: &[Tensor]| -> Result<(Graph, Vec<NodeId>, NodeId)> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        if !g.value(out).is_scalar() {
            return Err(Error::shape(
                "grad_check",
                format!("function must return a scalar, got {:?}", g.value(out).shape()),
            ));
        }
        Ok((g, ids, out))
    };

    let (mut g, ids, out) = eval(params)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = ids
        .iter()
        .zip(params)
        .map(|(&id, p)| g.grad(id).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let mut coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| (0..p.numel()).map(move |c| (pi, c)))
        .collect();
    if let Some(limit) = opts.max_coords {
        if limit < coords.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked = rand::seq::index::sample(&mut rng, coords.len(), limit).into_vec();
            picked.sort_unstable();
            coords = picked.into_iter().map(|i| coords[i]).collect();
        }
    }

    let mut values = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: coords.len(),
        worst: None,
    };
    for &(pi, c) in &coords {
        let original = values[pi].data()[c];
        values[pi].data_mut()[c] = original + opts.eps;
        let (gp, _, op) = eval(&values)?;
        let plus = gp.value(op).data()[0];
        values[pi].data_mut()[c] = original - opts.eps;
        let (gm, _, om) = eval(&values)?;
        let minus = gm.value(om).data()[0];
        values[pi].data_mut()[c] = original;

        let numeric = (plus - minus) / (2.0 * opts.eps);
        let a = analytic[pi].data()[c];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((pi, c));
        }
    }
    Ok(report)
}
