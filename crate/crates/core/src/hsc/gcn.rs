//! Correlation-kernel graph convolution over hop neighbourhoods.
//!
//! For filter `f`, neighbour `j` of target `i` scores
//! `u_fj = sigmoid(e_i' M_f e_j)`, and hop `k` aggregates
//! `h_fk = sum_{j in N_k(i)} sum_l z_fl T_l(2 u_fj - 1)`.

use rand::Rng;

use crate::autodiff::{ParamBuilder, ParamId, ParamStore, Session, Shape, Var};
use crate::error::{Error, Result};
use crate::graphdata::RoadGraph;
use crate::nn::chebyshev::{basis, to_domain};

/// Plain-valued kernel parameters, one `(M, z)` pair per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    /// Row-major `c x c` matrices.
    pub m: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub c: usize,
    pub hops: usize,
}

impl GcnParams {
    pub fn filters(&self) -> usize {
        self.m.len()
    }

    /// `u = sigmoid(a' M_f b)` for filter `f`.
    pub fn kernel(&self, f: usize, a: &[f64], b: &[f64]) -> f64 {
        let c = self.c;
        let mut acc = 0.0;
        for r in 0..c {
            let row: f64 = (0..c).map(|q| self.m[f][r * c + q] * b[q]).sum();
            acc += a[r] * row;
        }
        1.0 / (1.0 + (-acc).exp())
    }
}

/// Hop features `h[k][f]` of `target` (plain-valued reference).
///
/// `embeddings[j]` is the length-`c` embedding of road `j`; `None` is
/// allowed only for roads outside the target's `hops` neighbourhood.
pub fn gcn_aggregate(
    graph: &RoadGraph,
    embeddings: &[Option<Vec<f64>>],
    params: &GcnParams,
    target: usize,
) -> Result<Vec<Vec<f64>>> {
    let e_i = embeddings
        .get(target)
        .and_then(Option::as_ref)
        .ok_or_else(|| Error::MissingData(format!("no embedding for target road {target}")))?;
    let hops = graph.k_hop_neighbors(target, params.hops)?;
    let mut out = vec![vec![0.0; params.filters()]; params.hops];
    for (k, ring) in hops.iter().enumerate() {
        for &j in ring {
            let e_j = embeddings
                .get(j)
                .and_then(Option::as_ref)
                .ok_or_else(|| Error::MissingData(format!("no embedding for neighbour road {j}")))?;
            for f in 0..params.filters() {
                let u = params.kernel(f, e_i, e_j);
                let t = basis(to_domain(u), params.z[f].len());
                out[k][f] += t.iter().zip(&params.z[f]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// Differentiable kernel layer. All `M_f` are stored side by side in one
/// `c x (F c)` parameter and the `z_f` as rows of an `F x K` parameter.
#[derive(Clone, Debug)]
pub struct Gcn {
    pub m: ParamId,
    pub z: ParamId,
    pub c: usize,
    pub filters: usize,
    pub order: usize,
    pub hops: usize,
}

impl Gcn {
    pub fn new<R: Rng>(b: &mut ParamBuilder<'_, R>, c: usize, filters: usize, order: usize, hops: usize) -> Result<Self> {
        if c == 0 || filters == 0 || order == 0 || hops == 0 {
            return Err(Error::invalid(format!(
                "GCN sizes must be positive (c {c}, filters {filters}, order {order}, hops {hops})"
            )));
        }
        Ok(Gcn {
            m: b.weight("m", c, filters * c)?,
            z: b.weight("z", filters, order)?,
            c,
            filters,
            order,
            hops,
        })
    }

    pub fn params(&self, store: &ParamStore) -> GcnParams {
        let (c, nf) = (self.c, self.filters);
        let m = &store.get(self.m).values;
        let z = &store.get(self.z).values;
        GcnParams {
            m: (0..nf)
                .map(|f| {
                    (0..c)
                        .flat_map(|r| m[r * nf * c + f * c..r * nf * c + (f + 1) * c].iter().copied())
                        .collect()
                })
                .collect(),
            z: z.chunks(self.order).map(<[f64]>::to_vec).collect(),
            c,
            hops: self.hops,
        }
    }

    /// Hop features as an `hops x F` matrix.
    ///
    /// `target` is `c x 1`; `neighbours` is `c x n` with column `j` at
    /// 0-based hop `hop_of[j]`.
    pub fn forward(&self, s: &mut Session<'_>, target: Var, neighbours: Option<Var>, hop_of: &[usize]) -> Result<Var> {
        let (c, nf, k) = (self.c, self.filters, self.order);
        if s.shape(target) != Shape::col(c) {
            return Err(Error::shape(
                "gcn_aggregate",
                format!("target embedding {} but expected {c}x1", s.shape(target)),
            ));
        }
        let Some(neigh) = neighbours else {
            return s.constant(Shape::new(self.hops, nf), vec![0.0; self.hops * nf]);
        };
        let n = hop_of.len();
        if s.shape(neigh) != Shape::new(c, n) {
            return Err(Error::shape(
                "gcn_aggregate",
                format!("neighbour embeddings {} but expected {c}x{n}", s.shape(neigh)),
            ));
        }
        if let Some(&bad) = hop_of.iter().find(|&&h| h >= self.hops) {
            return Err(Error::invalid(format!("hop index {bad} outside 0..{}", self.hops)));
        }

        let m = s.param(self.m);
        let et = s.transpose(target);
        let a = s.matmul(et, m)?;
        let a = s.reshape(a, Shape::new(nf, c))?;
        let scores = s.matmul(a, neigh)?;
        let u = s.sigmoid(scores);
        let x = s.affine(u, 2.0, -1.0);
        let t = s.chebyshev(x, k)?;
        let z = s.param(self.z);
        let zt = s.transpose(z);
        let all = s.matmul(t, zt)?;

        // Row (f, j) of `all` keeps only column f.
        let mut own = vec![0.0; nf * n * nf];
        for f in 0..nf {
            for j in 0..n {
                own[(f * n + j) * nf + f] = 1.0;
            }
        }
        let own = s.constant(Shape::new(nf * n, nf), own)?;
        let per = s.mul(all, own)?;

        let mut pool = vec![0.0; self.hops * nf * n];
        for f in 0..nf {
            for (j, &h) in hop_of.iter().enumerate() {
                pool[h * nf * n + f * n + j] = 1.0;
            }
        }
        let pool = s.constant(Shape::new(self.hops, nf * n), pool)?;
        s.matmul(pool, per)
    }
}
