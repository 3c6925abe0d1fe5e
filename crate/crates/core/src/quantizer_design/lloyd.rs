use super::codebook::Codebook;
use super::density::Density;
use crate::error::{degenerate, validation, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydOptions {
    /// Stop once the relative change of the mean squared error falls below this
    /// and no level moved by more than `level_tolerance` times the support width.
    pub tolerance: f64,
    pub level_tolerance: f64,
    pub max_iterations: usize,
    /// Contraction attempts allowed for one empty cell.
    pub max_retries: usize,
}

impl Default for LloydOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            level_tolerance: 1e-9,
            max_iterations: 500,
            max_retries: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LloydReport {
    pub codebook: Codebook,
    /// Mean squared error after each centroid step.
    pub esq_history: Vec<f64>,
    /// Iterations in which an empty cell had to be repaired; the error may rise there.
    pub repaired: Vec<usize>,
    pub converged: bool,
}

impl LloydReport {
    pub fn iterations(&self) -> usize {
        self.esq_history.len()
    }
}

/// Mass below which a cell counts as empty.
const EMPTY_MASS: f64 = 1e-300;
const CONTRACTION: f64 = 0.1;

/// MSE-optimal `levels`-level codebook for `pdf`.
pub fn lloyd_max<D: Density>(pdf: &D, levels: usize) -> Result<Codebook> {
    Ok(lloyd_max_with(pdf, levels, &LloydOptions::default())?.codebook)
}

pub fn lloyd_max_with<D: Density>(
    pdf: &D,
    levels: usize,
    opts: &LloydOptions,
) -> Result<LloydReport> {
    if levels < 2 {
        return Err(validation("Lloyd-Max needs at least two levels"));
    }
    let (lo, hi) = pdf.support();
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(validation("density support must be a finite interval"));
    }
    let total = pdf.moments(lo, hi, 0.5 * (lo + hi));
    if !(total[0] > 0.0) {
        return Err(degenerate("density carries no probability mass"));
    }
    let centroid = 0.5 * (lo + hi) + total[1] / total[0];

    // edges[0] = lo and edges[L] = hi stay fixed; the interior ones are the boundaries.
    let mut edges = compander_edges(pdf, levels);
    let mut y = vec![0.0; levels];
    let mut history = Vec::new();
    let mut repaired = Vec::new();
    let mut converged = false;

    for iter in 0..opts.max_iterations {
        let (esq, fixed) = centroid_step(pdf, &mut edges, &mut y, centroid, opts.max_retries)?;
        if fixed {
            repaired.push(iter);
        }
        let prev = history.last().copied();
        history.push(esq);
        let mut mid = edges.clone();
        let mut shift = 0.0f64;
        for k in 1..levels {
            mid[k] = 0.5 * (y[k - 1] + y[k]);
            shift = shift.max((mid[k] - edges[k]).abs());
        }
        let settled = match prev {
            Some(p) => {
                let scale = p.abs().max(f64::MIN_POSITIVE);
                ((p - esq) / scale).abs() < opts.tolerance
                    && shift < opts.level_tolerance * (hi - lo)
            }
            None => esq == 0.0,
        };
        if settled {
            edges = mid;
            converged = true;
            break;
        }
        edges = match newton_edges(pdf, &edges, &y) {
            Some(cand) if candidate_esq(pdf, &cand).is_some_and(|e| e <= esq) => cand,
            _ => mid,
        };
    }
    if !converged {
        // Leave the returned pair consistent: levels are centroids, boundaries midpoints.
        centroid_step(pdf, &mut edges, &mut y, centroid, opts.max_retries)?;
        for k in 1..levels {
            edges[k] = 0.5 * (y[k - 1] + y[k]);
        }
    }

    let boundaries = edges[1..levels].to_vec();
    let esq = *history.last().expect("at least one iteration");
    let codebook = Codebook::new(y, boundaries)
        .map_err(|e| degenerate(format!("Lloyd-Max levels collapsed: {e}")))?
        .with_esq(esq);
    Ok(LloydReport {
        codebook,
        esq_history: history,
        repaired,
        converged,
    })
}

/// Moves every level to its cell centroid, repairing empty cells on the way.
/// Returns the resulting error and whether a repair happened.
fn centroid_step<D: Density>(
    pdf: &D,
    edges: &mut Vec<f64>,
    y: &mut [f64],
    centroid: f64,
    max_retries: usize,
) -> Result<(f64, bool)> {
    let levels = y.len();
    let mut fixed = false;
    let mut splits = 0;
    'scan: loop {
        let mut esq = 0.0;
        for k in 0..levels {
            let mut m = cell_moments(pdf, edges, k);
            let mut tries = 0;
            while !(m[0] > EMPTY_MASS) {
                fixed = true;
                if tries == max_retries {
                    // Contraction could not reach any mass: drop the cell and split
                    // the cell with the largest error at its centroid instead.
                    if splits == 4 * levels || !split_worst(pdf, edges, k) {
                        return Err(degenerate(format!(
                            "cell {k} of {levels} stays empty after {tries} contractions"
                        )));
                    }
                    splits += 1;
                    continue 'scan;
                }
                contract(edges, k, centroid);
                m = cell_moments(pdf, edges, k);
                tries += 1;
            }
            let c = 0.5 * (edges[k] + edges[k + 1]);
            y[k] = c + m[1] / m[0];
            esq += (m[2] - m[1] * m[1] / m[0]).max(0.0);
        }
        return Ok((esq, fixed));
    }
}

/// Removes empty cell `k` by merging it into a neighbour, then splits the cell
/// with the largest squared error at its centroid. False if no cell can be split.
fn split_worst<D: Density>(pdf: &D, edges: &mut Vec<f64>, k: usize) -> bool {
    let removed = edges.remove(if k == 0 { 1 } else { k });
    let mut worst = None;
    let mut worst_err = 0.0;
    for j in 0..edges.len() - 1 {
        let m = cell_moments(pdf, edges, j);
        if m[0] > EMPTY_MASS {
            let err = m[2] - m[1] * m[1] / m[0];
            if err > worst_err {
                worst_err = err;
                worst = Some((j, 0.5 * (edges[j] + edges[j + 1]) + m[1] / m[0]));
            }
        }
    }
    match worst {
        Some((j, c)) if edges[j] < c && c < edges[j + 1] => {
            edges.insert(j + 1, c);
            true
        }
        _ => {
            edges.insert(if k == 0 { 1 } else { k }, removed);
            false
        }
    }
}

/// Error of the edges after a centroid step, or `None` if a cell is empty.
fn candidate_esq<D: Density>(pdf: &D, edges: &[f64]) -> Option<f64> {
    let mut esq = 0.0;
    for k in 0..edges.len() - 1 {
        let m = cell_moments(pdf, edges, k);
        if !(m[0] > EMPTY_MASS) {
            return None;
        }
        esq += (m[2] - m[1] * m[1] / m[0]).max(0.0);
    }
    Some(esq)
}

/// One Newton step on `b_j = (y_{j-1} + y_j) / 2`, whose Jacobian is tridiagonal.
/// Returns `None` when the step would reorder the edges.
fn newton_edges<D: Density>(pdf: &D, edges: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let levels = y.len();
    let n = levels - 1;
    let mass: Vec<f64> = (0..levels)
        .map(|k| cell_moments(pdf, edges, k)[0])
        .collect();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let j = i + 1;
        let b = edges[j];
        let f = pdf.pdf(b);
        diag[i] = 1.0 - 0.5 * f * ((b - y[j - 1]) / mass[j - 1] + (y[j] - b) / mass[j]);
        if j > 1 {
            let bl = edges[j - 1];
            sub[i] = -0.5 * pdf.pdf(bl) * (y[j - 1] - bl) / mass[j - 1];
        }
        if j + 1 < levels {
            let br = edges[j + 1];
            sup[i] = -0.5 * pdf.pdf(br) * (br - y[j]) / mass[j];
        }
        rhs[i] = 0.5 * (y[j - 1] + y[j]) - b;
    }
    // Thomas algorithm.
    for i in 1..n {
        if diag[i - 1] == 0.0 {
            return None;
        }
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut delta = vec![0.0; n];
    for i in (0..n).rev() {
        let next = if i + 1 < n {
            sup[i] * delta[i + 1]
        } else {
            0.0
        };
        if diag[i] == 0.0 {
            return None;
        }
        delta[i] = (rhs[i] - next) / diag[i];
    }
    let mut out = edges.to_vec();
    for i in 0..n {
        out[i + 1] += delta[i];
    }
    (out.iter().all(|v| v.is_finite()) && out.windows(2).all(|w| w[0] < w[1])).then_some(out)
}

fn cell_moments<D: Density>(pdf: &D, edges: &[f64], k: usize) -> [f64; 3] {
    let (a, b) = (edges[k], edges[k + 1]);
    pdf.moments(a, b, 0.5 * (a + b))
}

/// Moves the boundaries of cell `k` a tenth of the way toward `target`,
/// keeping every boundary strictly between its neighbours.
fn contract(edges: &mut [f64], k: usize, target: f64) {
    let last = edges.len() - 1;
    for j in [k, k + 1] {
        if j == 0 || j == last {
            continue;
        }
        let moved = edges[j] + CONTRACTION * (target - edges[j]);
        let (left, right) = (edges[j - 1], edges[j + 1]);
        edges[j] = if moved <= left || moved >= right {
            0.5 * (left + right)
        } else {
            moved
        };
    }
    // An outer cell cannot move its fixed support edge, so pull its inner edge outward.
    if k == 0 && edges[1] <= target {
        edges[1] += CONTRACTION * (edges[2] - edges[1]);
    } else if k + 1 == last && edges[last - 1] >= target {
        edges[last - 1] -= CONTRACTION * (edges[last - 1] - edges[last - 2]);
    }
}

/// Initial edges from the high-resolution compander: cells of equal `∫ f^(1/3)`.
fn compander_edges<D: Density>(pdf: &D, levels: usize) -> Vec<f64> {
    let (lo, hi) = pdf.support();
    let n = (64 * levels).max(4096);
    let h = (hi - lo) / n as f64;
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for i in 0..n {
        acc += pdf.pdf(lo + h * (i as f64 + 0.5)).max(0.0).cbrt();
        cum.push(acc);
    }
    let mut edges = Vec::with_capacity(levels + 1);
    edges.push(lo);
    for k in 1..levels {
        let target = acc * k as f64 / levels as f64;
        let j = cum.partition_point(|c| *c < target).clamp(1, n);
        let (c0, c1) = (cum[j - 1], cum[j]);
        let frac = if c1 > c0 {
            (target - c0) / (c1 - c0)
        } else {
            0.5
        };
        let e = lo + h * (j as f64 - 1.0 + frac);
        let prev = *edges.last().unwrap();
        edges.push(if e > prev {
            e
        } else {
            prev + (hi - prev) / (levels - k + 1) as f64
        });
    }
    edges.push(hi);
    edges
}

/// Mean squared quantization error of `codebook` under `pdf`.
pub fn quantization_mse<D: Density>(pdf: &D, codebook: &Codebook) -> f64 {
    let (lo, hi) = pdf.support();
    let levels = codebook.levels();
    let bounds = codebook.boundaries();
    let mut total = 0.0;
    for (l, y) in levels.iter().enumerate() {
        let a = if l == 0 { lo } else { bounds[l - 1].max(lo) };
        let b = if l + 1 == levels.len() {
            hi
        } else {
            bounds[l].min(hi)
        };
        if a < b {
            total += pdf.moments(a, b, *y)[2];
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_simpson;
    use crate::quantizer_design::density::{FittedPdf, UniformPdf};
    use crate::quantizer_design::histogram::histogram;
    use crate::quantizer_design::uniform_codebook;

    #[test]
    fn uniform_four_levels_closed_form() {
        let u = UniformPdf::new(0.0, 1.0).unwrap();
        let cb = lloyd_max(&u, 4).unwrap();
        for (got, want) in cb.boundaries().iter().zip([0.25, 0.5, 0.75]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in cb.levels().iter().zip([0.125, 0.375, 0.625, 0.875]) {
            assert!((got - want).abs() < 1e-12);
        }
        // Four cells of width 1/4, each contributing (1/4)^3 / 12.
        let oracle = 4.0 * 0.25f64.powi(3) / 12.0;
        assert!((oracle - 1.0 / 192.0).abs() < 1e-18);
        assert!((cb.esq().unwrap() - oracle).abs() < 1e-12);
        let edges = [0.0, 0.25, 0.5, 0.75, 1.0];
        let direct: f64 = (0..4)
            .map(|k| {
                let y = cb.levels()[k];
                adaptive_simpson(|x| (x - y) * (x - y), edges[k], edges[k + 1], 1e-15)
            })
            .sum();
        assert!((direct - oracle).abs() < 1e-10);
    }

    fn laplacian() -> FittedPdf {
        FittedPdf::new(50.0, 1.0, 0.7, -0.4854, 0.6044).unwrap()
    }

    #[test]
    fn esq_never_increases() {
        let pdf = laplacian();
        let r = lloyd_max_with(&pdf, 16, &LloydOptions::default()).unwrap();
        assert!(r.repaired.is_empty());
        for w in r.esq_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn returned_codebook_is_a_fixed_point() {
        let pdf = laplacian();
        for levels in [4, 16, 64] {
            let cb = lloyd_max(&pdf, levels).unwrap();
            let b = cb.boundaries();
            for (k, y) in cb.levels().iter().enumerate() {
                let a = if k == 0 { pdf.lo } else { b[k - 1] };
                let e = if k + 1 == levels { pdf.hi } else { b[k] };
                let m = pdf.moments(a, e, *y);
                assert!(
                    (m[1] / m[0]).abs() < 1e-6,
                    "L={levels} level {k} moved {}",
                    m[1] / m[0]
                );
            }
            for (k, bd) in b.iter().enumerate() {
                let mid = 0.5 * (cb.levels()[k] + cb.levels()[k + 1]);
                assert!((bd - mid).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_density_gives_symmetric_codebook() {
        let pdf = FittedPdf::new(30.0, 1.0, 0.8, -0.5, 0.5).unwrap();
        let cb = lloyd_max(&pdf, 8).unwrap();
        let lv = cb.levels();
        for k in 0..lv.len() {
            assert!((lv[k] + lv[lv.len() - 1 - k]).abs() < 1e-6);
        }
    }

    #[test]
    fn beats_uniform_on_peaked_density() {
        let pdf = laplacian();
        let lm = lloyd_max(&pdf, 16).unwrap();
        let un = uniform_codebook(pdf.lo, pdf.hi, 16).unwrap();
        let (a, b) = (quantization_mse(&pdf, &lm), quantization_mse(&pdf, &un));
        assert!(a < b, "{a} vs {b}");
        assert!((a - lm.esq().unwrap()).abs() < 1e-6 * a);
    }

    #[test]
    fn doubling_levels_never_hurts() {
        let pdf = laplacian();
        let mut prev = f64::INFINITY;
        for levels in [2, 4, 8, 16, 32] {
            let e = lloyd_max(&pdf, levels).unwrap().esq().unwrap();
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn gappy_histogram_trains() {
        let mut v: Vec<f64> = (0..500).map(|i| -1.0 + i as f64 * 1e-4).collect();
        v.extend((0..500).map(|i| 1.0 + i as f64 * 1e-4));
        let h = histogram(&v, 64).unwrap();
        let cb = lloyd_max(&h, 8).unwrap();
        assert_eq!(cb.len(), 8);
        assert!(cb.esq().unwrap() < 1e-3);
    }

    #[test]
    fn rejects_single_level() {
        assert!(lloyd_max(&UniformPdf::new(0.0, 1.0).unwrap(), 1).is_err());
    }
}
