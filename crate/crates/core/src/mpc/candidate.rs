use std::sync::Arc;

use nalgebra::DVector;

use super::cocp::CocpData;
use super::{MpcError, TubeDecision};
use crate::polytope::{support, weights_for};

/// Shifted tube built from the optimum `prev` of the problem `prev_data` for
/// the next problem `next` at the measured `x_next`.
///
/// `next` must share `prev_data`'s estimate and gain; its sets may be
/// refined. When the shape changed, each new section vertex takes the
/// barycentric combination of the shifted tube's inputs.
pub fn shifted_candidate(
    prev: &TubeDecision,
    prev_data: &CocpData,
    next: &CocpData,
    x_next: &DVector<f64>,
) -> Result<TubeDecision, MpcError> {
    let big_n = prev.horizon();
    if big_n != prev_data.horizon
        || big_n != next.horizon
        || prev.alpha.len() != big_n + 1
        || prev.beta.len() != big_n + 1
    {
        return Err(MpcError::DimensionMismatch("candidate horizon".into()));
    }
    let s = prev_data.shape.vertices();
    if prev.v.iter().any(|vi| vi.len() != s.len()) {
        return Err(MpcError::DimensionMismatch("candidate shape vertex count".into()));
    }
    let k = &prev_data.gains.k;
    let a_cl = &prev_data.a_hat + &prev_data.b_hat * k;

    let mut alpha = Vec::with_capacity(big_n + 1);
    let mut beta = Vec::with_capacity(big_n + 1);
    alpha.push(x_next.clone());
    beta.push(0.0);
    for i in 1..big_n {
        alpha.push(prev.alpha[i + 1].clone());
        beta.push(prev.beta[i + 1]);
    }
    alpha.push(&a_cl * &prev.alpha[big_n]);
    let b_end = prev.beta[big_n].max(0.0);
    let shape = &prev_data.shape.set;
    let beta_n = shape
        .hrep()
        .rows()
        .map(|(h, g)| (b_end * support(shape, &(a_cl.transpose() * &h)) + support(&next.dist.w_global, &h)) / g)
        .fold(0.0_f64, f64::max);
    beta.push(beta_n);

    // inputs of the shifted tube, indexed by the old shape's vertices
    let mut shifted: Vec<Vec<DVector<f64>>> = Vec::with_capacity(big_n);
    let v0 = if big_n == 1 {
        k * x_next
    } else {
        let lam = weights_in(&prev.section_vertices(1, s), prev.beta[1], x_next)?;
        combine(&lam, &prev.v[1])
    };
    shifted.push(vec![v0; s.len()]);
    for i in 1..big_n - 1 {
        shifted.push(prev.v[i + 1].clone());
    }
    if big_n >= 2 {
        shifted.push(prev.section_vertices(big_n, s).iter().map(|z| k * z).collect());
    }

    let same_shape = Arc::ptr_eq(&prev_data.shape, &next.shape)
        || prev_data.shape.set == next.shape.set && next.shape.vertices() == s;
    let v = if same_shape {
        shifted
    } else {
        let s_new = next.shape.vertices();
        let mut v = Vec::with_capacity(big_n);
        for (i, vi) in shifted.iter().enumerate() {
            let old_z: Vec<DVector<f64>> = s.iter().map(|sj| &alpha[i] + sj * beta[i]).collect();
            let mut row = Vec::with_capacity(s_new.len());
            for sj in s_new {
                let z = &alpha[i] + sj * beta[i];
                if i == big_n - 1 && big_n >= 2 {
                    row.push(k * &z);
                } else {
                    row.push(combine(&weights_in(&old_z, beta[i], &z)?, vi));
                }
            }
            v.push(row);
        }
        v
    };
    Ok(TubeDecision { alpha, beta, v })
}

fn weights_in(verts: &[DVector<f64>], beta: f64, x: &DVector<f64>) -> Result<DVector<f64>, MpcError> {
    if beta.abs() <= 1e-12 {
        return Ok(DVector::from_element(verts.len(), 1.0 / verts.len() as f64));
    }
    Ok(weights_for(verts, x, 1e-7)?)
}

fn combine(lam: &DVector<f64>, v: &[DVector<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(v[0].len());
    for (l, vj) in lam.iter().zip(v) {
        out += vj * *l;
    }
    out
}
