//! Breadth-limited forward beam search over support hypotheses with
//! incremental orthogonal-projection updates.
//!
//! Each beam node keeps an orthonormal basis of its selected columns, the
//! projected residual of the measurement vector, and per-column caches of
//! residual inner products and projected norms. Scoring a candidate
//! extension then costs O(1) per column, and committing an extension costs
//! one pass over the matrix.

use std::collections::HashSet;

use crate::rc::MeasurementSystem;

/// Column access for the search. A group is one support index; it activates
/// `group_size` real columns (one for the phase-augmented magnitude system,
/// two for the complex-unknown system).
pub(crate) trait Columns {
    fn rows(&self) -> usize;
    fn n_groups(&self) -> usize;
    fn group_size(&self) -> usize;
    fn ybar(&self) -> &[f64];
    fn write_column(&self, group: usize, slot: usize, out: &mut [f64]);
    /// Dot product of every column with `q`; `out` has length
    /// `n_groups * group_size`, slot-major within each group.
    fn dots(&self, q: &[f64], out: &mut [f64]);
}

/// Direct view of the real 2P x N system (group size 1).
pub(crate) struct RealColumns<'a>(pub &'a MeasurementSystem);

impl Columns for RealColumns<'_> {
    fn rows(&self) -> usize {
        self.0.rows()
    }
    fn n_groups(&self) -> usize {
        self.0.n()
    }
    fn group_size(&self) -> usize {
        1
    }
    fn ybar(&self) -> &[f64] {
        &self.0.ybar
    }
    fn write_column(&self, group: usize, _slot: usize, out: &mut [f64]) {
        out.copy_from_slice(self.0.column(group));
    }
    fn dots(&self, q: &[f64], out: &mut [f64]) {
        for i in 0..self.0.n() {
            out[i] = dot(self.0.column(i), q);
        }
    }
}

/// Complex-unknown view: column i of the stored system is the real split of
/// `Phi_i = Psi_i e^{j theta_i}`; undoing the rotation yields `Psi_i`, and
/// each group contributes the two real columns `[Re Psi; Im Psi]` and
/// `[-Im Psi; Re Psi]`, spanning arbitrary complex amplitudes.
pub(crate) struct ComplexPairColumns<'a> {
    sys: &'a MeasurementSystem,
    cos_t: Vec<f64>,
    sin_t: Vec<f64>,
    p: usize,
}

impl<'a> ComplexPairColumns<'a> {
    pub(crate) fn new(sys: &'a MeasurementSystem) -> Self {
        assert!(
            !sys.chosen.is_empty() || sys.theta.iter().all(|&t| t == 0.0),
            "complex route requires a contiguous re/im row layout"
        );
        let cos_t = sys.theta.iter().map(|t| t.cos()).collect();
        let sin_t = sys.theta.iter().map(|t| t.sin()).collect();
        Self { sys, cos_t, sin_t, p: sys.rows() / 2 }
    }
}

impl Columns for ComplexPairColumns<'_> {
    fn rows(&self) -> usize {
        self.sys.rows()
    }
    fn n_groups(&self) -> usize {
        self.sys.n()
    }
    fn group_size(&self) -> usize {
        2
    }
    fn ybar(&self) -> &[f64] {
        &self.sys.ybar
    }
    fn write_column(&self, group: usize, slot: usize, out: &mut [f64]) {
        let col = self.sys.column(group);
        let (c, s) = (self.cos_t[group], self.sin_t[group]);
        let p = self.p;
        for r in 0..p {
            let (re_phi, im_phi) = (col[r], col[r + p]);
            let re_psi = re_phi * c + im_phi * s;
            let im_psi = im_phi * c - re_phi * s;
            if slot == 0 {
                out[r] = re_psi;
                out[r + p] = im_psi;
            } else {
                out[r] = -im_psi;
                out[r + p] = re_psi;
            }
        }
    }
    fn dots(&self, q: &[f64], out: &mut [f64]) {
        let p = self.p;
        for i in 0..self.sys.n() {
            let col = self.sys.column(i);
            let mut a = 0.0; // Re(Phi) . q_top + Im(Phi) . q_bot
            let mut b = 0.0; // Im(Phi) . q_top - Re(Phi) . q_bot
            for r in 0..p {
                a += col[r] * q[r] + col[r + p] * q[r + p];
                b += col[r + p] * q[r] - col[r] * q[r + p];
            }
            let (c, s) = (self.cos_t[i], self.sin_t[i]);
            out[2 * i] = c * a + s * b;
            out[2 * i + 1] = s * a - c * b;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Per-group Bernoulli prior in log-likelihood-ratio form.
pub(crate) struct PriorTables {
    /// log(rho_i) - log(1 - rho_i) per group.
    pub llr: Vec<f64>,
    /// log prior of the empty support.
    pub base: f64,
    /// max(0, llr_i) per group, for the future-score bound.
    pub pos_gain: Vec<f64>,
    pub pos_gain_total: f64,
}

impl PriorTables {
    pub(crate) fn new(rho: &[f64]) -> Self {
        let llr: Vec<f64> = rho.iter().map(|&r| r.ln() - (-r).ln_1p()).collect();
        let base: f64 = rho.iter().map(|&r| (-r).ln_1p()).sum();
        let pos_gain: Vec<f64> = llr.iter().map(|&v| v.max(0.0)).collect();
        let pos_gain_total = pos_gain.iter().sum();
        Self { llr, base, pos_gain, pos_gain_total }
    }
}

pub(crate) struct SearchParams {
    pub d_keep: usize,
    pub k_max: usize,
    pub window: f64,
    pub collect_cap: usize,
    pub sigma2: f64,
    pub rank_tol: f64,
}

/// Dominant supports found by the search, sorted by descending score.
pub(crate) struct SearchOutcome {
    pub supports: Vec<Vec<u16>>,
    pub scores: Vec<f64>,
}

struct Node {
    support: Vec<u16>,
    in_support: Vec<bool>,
    basis: Vec<Vec<f64>>,
    res: Vec<f64>,
    res2: f64,
    log_prior: f64,
    pos_gain_left: f64,
    col_res: Vec<f64>,
    col_m: Vec<f64>,
    cross: Vec<f64>,
}

// Hard memory bound on the candidate pool between pruning passes.
const COLLECT_HARD_LIMIT: usize = 16_384;

pub(crate) fn beam_search(
    cols: &impl Columns,
    prior: &PriorTables,
    params: &SearchParams,
) -> SearchOutcome {
    let rows = cols.rows();
    let n = cols.n_groups();
    let g = cols.group_size();
    let two_sigma2 = 2.0 * params.sigma2;

    let ybar = cols.ybar().to_vec();
    let res2_root = dot(&ybar, &ybar);

    // Column norms at the root, for rank tolerances.
    let mut norm0 = vec![0.0; n * g];
    {
        let mut buf = vec![0.0; rows];
        for i in 0..n {
            for s in 0..g {
                cols.write_column(i, s, &mut buf);
                norm0[i * g + s] = dot(&buf, &buf);
            }
        }
    }

    let mut root = Node {
        support: Vec::new(),
        in_support: vec![false; n],
        basis: Vec::new(),
        res: ybar.clone(),
        res2: res2_root,
        log_prior: prior.base,
        pos_gain_left: prior.pos_gain_total,
        col_res: vec![0.0; n * g],
        col_m: norm0.clone(),
        cross: vec![0.0; if g == 2 { n } else { 0 }],
        };
    cols.dots(&ybar, &mut root.col_res);
    if g == 2 {
        // Cross inner products between the two columns of each group.
        let mut a = vec![0.0; rows];
        let mut b = vec![0.0; rows];
        for i in 0..n {
            cols.write_column(i, 0, &mut a);
            cols.write_column(i, 1, &mut b);
            root.cross[i] = dot(&a, &b);
        }
    }

    let empty_score = -root.res2 / two_sigma2 + root.log_prior;
    let mut best = empty_score;
    let mut collected: Vec<(f64, Vec<u16>)> = vec![(empty_score, Vec::new())];
    let mut visited: HashSet<Vec<u16>> = HashSet::new();
    visited.insert(Vec::new());

    let mut beam = vec![root];
    let max_depth = params.k_max.min(rows / g).min(n);

    for _depth in 1..=max_depth {
        // Score every extension of every beam node.
        let mut candidates: Vec<(f64, usize, u16)> = Vec::new();
        for (node_idx, node) in beam.iter().enumerate() {
            for i in 0..n {
                if node.in_support[i] {
                    continue;
                }
                let delta = match g {
                    1 => {
                        let m = node.col_m[i];
                        if m <= params.rank_tol * norm0[i] {
                            continue;
                        }
                        node.col_res[i] * node.col_res[i] / m
                    }
                    _ => {
                        let (ma, mb) = (node.col_m[2 * i], node.col_m[2 * i + 1]);
                        let cab = node.cross[i];
                        let det = ma * mb - cab * cab;
                        if det <= params.rank_tol * norm0[2 * i] * norm0[2 * i + 1] {
                            continue;
                        }
                        let (ga, gb) = (node.col_res[2 * i], node.col_res[2 * i + 1]);
                        (mb * ga * ga - 2.0 * cab * ga * gb + ma * gb * gb) / det
                    }
                };
                let res2_new = (node.res2 - delta).max(0.0);
                let score = -res2_new / two_sigma2 + node.log_prior + prior.llr[i];
                let mut key = node.support.clone();
                let pos = key.partition_point(|&v| v < i as u16);
                key.insert(pos, i as u16);
                if !visited.insert(key.clone()) {
                    continue;
                }
                if score >= best - params.window {
                    if score > best {
                        best = score;
                    }
                    collected.push((score, key));
                }
                candidates.push((score, node_idx, i as u16));
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        });
        candidates.truncate(params.d_keep);

        // Commit the survivors.
        let mut next = Vec::with_capacity(candidates.len());
        for (_, parent_idx, group) in &candidates {
            if let Some(node) = extend(cols, &beam[*parent_idx], *group as usize, prior, &norm0, params)
            {
                next.push(node);
            }
        }
        if next.is_empty() {
            break;
        }

        // Keep the candidate pool bounded; pruning against the running best
        // is exact because the best score only grows.
        if collected.len() > COLLECT_HARD_LIMIT {
            collected.retain(|(s, _)| *s >= best - params.window);
            if collected.len() > COLLECT_HARD_LIMIT {
                collected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                collected.truncate(COLLECT_HARD_LIMIT / 2);
            }
        }

        // No descendant of the beam can re-enter the window once its maximal
        // achievable score (zero residual, all favorable activations) falls
        // below it.
        let bound = next
            .iter()
            .map(|nd| nd.log_prior + nd.pos_gain_left)
            .fold(f64::NEG_INFINITY, f64::max);
        beam = next;
        if bound < best - params.window {
            break;
        }
    }

    collected.retain(|(s, _)| *s >= best - params.window);
    collected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    collected.truncate(params.collect_cap);

    let (scores, supports): (Vec<f64>, Vec<Vec<u16>>) = collected.into_iter().unzip();
    SearchOutcome { supports, scores }
}

/// Builds the child node of `parent` extended by `group`, updating the
/// orthonormal basis, residual and per-column caches.
fn extend(
    cols: &impl Columns,
    parent: &Node,
    group: usize,
    prior: &PriorTables,
    norm0: &[f64],
    params: &SearchParams,
) -> Option<Node> {
    let rows = cols.rows();
    let g = cols.group_size();
    let mut node = Node {
        support: parent.support.clone(),
        in_support: parent.in_support.clone(),
        basis: parent.basis.clone(),
        res: parent.res.clone(),
        res2: parent.res2,
        log_prior: parent.log_prior + prior.llr[group],
        pos_gain_left: parent.pos_gain_left - prior.pos_gain[group],
        col_res: parent.col_res.clone(),
        col_m: parent.col_m.clone(),
        cross: parent.cross.clone(),
    };
    let pos = node.support.partition_point(|&v| v < group as u16);
    node.support.insert(pos, group as u16);
    node.in_support[group] = true;

    let mut dots_buf = vec![0.0; cols.n_groups() * g];
    for slot in 0..g {
        let mut v = vec![0.0; rows];
        cols.write_column(group, slot, &mut v);
        for q in &node.basis {
            let r = dot(q, &v);
            for (vi, qi) in v.iter_mut().zip(q.iter()) {
                *vi -= r * qi;
            }
        }
        let vnorm2 = dot(&v, &v);
        if vnorm2 <= params.rank_tol * norm0[group * g + slot] {
            return None;
        }
        let inv = 1.0 / vnorm2.sqrt();
        for vi in v.iter_mut() {
            *vi *= inv;
        }

        let beta = dot(&v, &node.res);
        cols.dots(&v, &mut dots_buf);
        for (c, u) in node.col_res.iter_mut().zip(dots_buf.iter()) {
            *c -= u * beta;
        }
        for (m, u) in node.col_m.iter_mut().zip(dots_buf.iter()) {
            *m -= u * u;
        }
        if g == 2 {
            for (i, x) in node.cross.iter_mut().enumerate() {
                *x -= dots_buf[2 * i] * dots_buf[2 * i + 1];
            }
        }
        for (ri, qi) in node.res.iter_mut().zip(v.iter()) {
            *ri -= beta * qi;
        }
        node.basis.push(v);
    }
    node.res2 = dot(&node.res, &node.res);
    Some(node)
}

/// QR least squares on an explicit set of groups. Returns the amplitudes
/// (slot-major per group) or `None` when the columns are rank deficient.
pub(crate) fn least_squares(
    cols: &impl Columns,
    groups: &[usize],
    rank_tol: f64,
) -> Option<Vec<f64>> {
    let rows = cols.rows();
    let g = cols.group_size();
    let m = groups.len() * g;
    if m == 0 {
        return Some(Vec::new());
    }
    if m > rows {
        return None;
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut r = vec![0.0; m * m];
    for (gi, &group) in groups.iter().enumerate() {
        for slot in 0..g {
            let l = gi * g + slot;
            let mut v = vec![0.0; rows];
            cols.write_column(group, slot, &mut v);
            let norm0 = dot(&v, &v);
            for (j, qj) in q.iter().enumerate() {
                let rij = dot(qj, &v);
                r[j * m + l] = rij;
                for (vi, qi) in v.iter_mut().zip(qj.iter()) {
                    *vi -= rij * qi;
                }
            }
            let vnorm2 = dot(&v, &v);
            if vnorm2 <= rank_tol.max(1e-300) * norm0.max(1e-300) {
                return None;
            }
            let nrm = vnorm2.sqrt();
            r[l * m + l] = nrm;
            let inv = 1.0 / nrm;
            for vi in v.iter_mut() {
                *vi *= inv;
            }
            q.push(v);
        }
    }
    let ybar = cols.ybar();
    let mut z: Vec<f64> = q.iter().map(|qj| dot(qj, ybar)).collect();
    // Back substitution on the upper-triangular R.
    for l in (0..m).rev() {
        for j in l + 1..m {
            let zj = z[j];
            z[l] -= r[l * m + j] * zj;
        }
        z[l] /= r[l * m + l];
    }
    Some(z)
}
