use super::kdtree::KdTree;
use super::{check_aligned, check_k, subsample_std_error, EntropyEstimate, EstimatorError, SampleMatrix};
use crate::special::digamma_table;

/// Kozachenko–Leonenko entropy (nats) of already-jittered samples:
/// `ψ(n) − ψ(k) + d·⟨ln 2ε_i⟩` with `ε_i` the max-norm distance to the k-th neighbour.
pub(crate) fn kl_entropy_nats(m: &SampleMatrix, k: usize) -> f64 {
    let n = m.len();
    let tree = KdTree::build(m.as_slice(), m.dim());
    let psi = digamma_table(n);
    let mut acc = 0.0;
    for i in 0..n {
        let eps = tree.kth_neighbor_distance(m.row(i), k, Some(i));
        acc += (2.0 * eps).ln();
    }
    psi[n] - psi[k] + m.dim() as f64 * acc / n as f64
}

/// Per-sample KSG (algorithm 1) contributions, nats:
/// `ψ(k) + ψ(n) − ψ(n_x + 1) − ψ(n_y + 1)`.
pub(crate) fn ksg_mi_locals(x: &SampleMatrix, y: &SampleMatrix, k: usize) -> Vec<f64> {
    let n = x.len();
    let joint = SampleMatrix::hstack(&[x, y]).expect("aligned");
    let tj = KdTree::build(joint.as_slice(), joint.dim());
    let tx = KdTree::build(x.as_slice(), x.dim());
    let ty = KdTree::build(y.as_slice(), y.dim());
    let psi = digamma_table(n + 1);
    let base = psi[k] + psi[n];
    (0..n)
        .map(|i| {
            let eps = tj.kth_neighbor_distance(joint.row(i), k, Some(i));
            let nx = tx.count_within(x.row(i), eps).saturating_sub(1);
            let ny = ty.count_within(y.row(i), eps).saturating_sub(1);
            base - (psi[nx + 1] + psi[ny + 1])
        })
        .collect()
}

/// Per-sample Frenzel–Pompe contributions, nats:
/// `ψ(k) − ψ(n_xz + 1) − ψ(n_yz + 1) + ψ(n_z + 1)`.
pub(crate) fn ksg_cmi_locals(x: &SampleMatrix, y: &SampleMatrix, z: &SampleMatrix, k: usize) -> Vec<f64> {
    let n = x.len();
    let joint = SampleMatrix::hstack(&[x, y, z]).expect("aligned");
    let xz = SampleMatrix::hstack(&[x, z]).expect("aligned");
    let yz = SampleMatrix::hstack(&[y, z]).expect("aligned");
    let tj = KdTree::build(joint.as_slice(), joint.dim());
    let txz = KdTree::build(xz.as_slice(), xz.dim());
    let tyz = KdTree::build(yz.as_slice(), yz.dim());
    let tz = KdTree::build(z.as_slice(), z.dim());
    let psi = digamma_table(n + 1);
    (0..n)
        .map(|i| {
            let eps = tj.kth_neighbor_distance(joint.row(i), k, Some(i));
            let nxz = txz.count_within(xz.row(i), eps).saturating_sub(1);
            let nyz = tyz.count_within(yz.row(i), eps).saturating_sub(1);
            let nz = tz.count_within(z.row(i), eps).saturating_sub(1);
            psi[k] - (psi[nxz + 1] + psi[nyz + 1]) + psi[nz + 1]
        })
        .collect()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn ksg_mi_nats(x: &SampleMatrix, y: &SampleMatrix, k: usize) -> f64 {
    mean(&ksg_mi_locals(x, y, k))
}

pub(crate) fn ksg_cmi_nats(x: &SampleMatrix, y: &SampleMatrix, z: &SampleMatrix, k: usize) -> f64 {
    mean(&ksg_cmi_locals(x, y, z, k))
}

/// Differential entropy of `samples` (any dimension). Samples on a
/// lower-dimensional set (e.g. all identical) give the `-∞` sentinel.
pub fn entropy_knn(samples: &SampleMatrix, k: usize) -> Result<EntropyEstimate, EstimatorError> {
    let n = samples.len();
    check_k(n, k)?;
    if samples.is_degenerate() {
        return Ok(EntropyEstimate::deterministic(n, k));
    }
    let j = samples.jittered();
    let value = kl_entropy_nats(&j, k);
    let se = subsample_std_error(n, k, |a, b| kl_entropy_nats(&j.slice_rows(a, b), k));
    Ok(EntropyEstimate::entropy(value, se, n, k))
}

/// `h(y | z) = h(y, z) − h(z)`, both terms by Kozachenko–Leonenko with the same `k`.
/// A deterministic relation between `y` and `z` gives the `-∞` sentinel.
pub fn conditional_entropy(y: &SampleMatrix, z: &SampleMatrix, k: usize) -> Result<EntropyEstimate, EstimatorError> {
    let n = check_aligned(&[y, z])?;
    check_k(n, k)?;
    if z.is_degenerate() {
        return Err(EstimatorError::DegenerateConditioning);
    }
    if SampleMatrix::hstack(&[y, z])?.is_degenerate() {
        return Ok(EntropyEstimate::deterministic(n, k));
    }
    let (jy, jz) = (y.jittered(), z.jittered());
    let joint = SampleMatrix::hstack(&[&jy, &jz])?;
    let diff = |j: &SampleMatrix, m: &SampleMatrix| kl_entropy_nats(j, k) - kl_entropy_nats(m, k);
    let value = diff(&joint, &jz);
    let se = subsample_std_error(n, k, |a, b| diff(&joint.slice_rows(a, b), &jz.slice_rows(a, b)));
    Ok(EntropyEstimate::entropy(value, se, n, k))
}

/// KSG mutual information `I(x; y)`. Symmetric in its arguments bit for bit.
pub fn mutual_information(x: &SampleMatrix, y: &SampleMatrix, k: usize) -> Result<EntropyEstimate, EstimatorError> {
    let n = check_aligned(&[x, y])?;
    check_k(n, k)?;
    let (jx, jy) = (x.jittered(), y.jittered());
    let value = ksg_mi_nats(&jx, &jy, k);
    let se = subsample_std_error(n, k, |a, b| ksg_mi_nats(&jx.slice_rows(a, b), &jy.slice_rows(a, b), k));
    Ok(EntropyEstimate::information(value, se, n, k))
}

/// Conditional mutual information `I(x; y | z)`.
pub fn conditional_mutual_information(
    x: &SampleMatrix,
    y: &SampleMatrix,
    z: &SampleMatrix,
    k: usize,
) -> Result<EntropyEstimate, EstimatorError> {
    let n = check_aligned(&[x, y, z])?;
    check_k(n, k)?;
    let (jx, jy, jz) = (x.jittered(), y.jittered(), z.jittered());
    let value = ksg_cmi_nats(&jx, &jy, &jz, k);
    let se = subsample_std_error(n, k, |a, b| {
        ksg_cmi_nats(&jx.slice_rows(a, b), &jy.slice_rows(a, b), &jz.slice_rows(a, b), k)
    });
    Ok(EntropyEstimate::information(value, se, n, k))
}
