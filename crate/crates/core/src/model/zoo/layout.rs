//! Mixing structure shared by the spatial and community models.

use crate::error::{Error, Result};
use crate::model::{dist2, gaussian_kernel, gaussian_kernel_with_slope, Covariates, PairTable};
use crate::scalar::{CompensatedSum, Real};

#[derive(Clone, Debug)]
pub(crate) struct Communities {
    /// Community index (dense, `0..J`) of each individual.
    pub of: Vec<usize>,
    pub centroid: Vec<[f64; 2]>,
    /// Within-community distance used when two centroids coincide.
    pub within: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub(crate) enum Layout {
    /// Every pair has unit weight.
    Homogeneous,
    /// Gaussian weights on individual positions.
    Points(Vec<[f64; 2]>),
    /// Gaussian weights on community centroids, with per-individual copies of
    /// the centroid and within-distance kept for literal evaluation.
    Communities {
        groups: Communities,
        centre: Vec<[f64; 2]>,
        within: Option<Vec<f64>>,
    },
}

impl Layout {
    pub fn points(cov: &Covariates) -> Result<Layout> {
        Ok(Layout::Points(cov.require_positions()?.to_vec()))
    }

    /// Community layout keyed on `community`, with centroids from `m1`/`m2`
    /// when present and from `z1`/`z2` otherwise.
    pub fn communities(cov: &Covariates, with_within: bool) -> Result<Layout> {
        let labels = cov.require_community()?;
        let centre: Vec<[f64; 2]> = match (cov.column("m1"), cov.column("m2")) {
            (Some(a), Some(b)) => a.into_iter().zip(b).map(|(x, y)| [x, y]).collect(),
            _ => cov.require_positions()?.to_vec(),
        };
        let within = if with_within {
            Some(cov.require_column("zbar")?)
        } else {
            None
        };

        let mut ids: Vec<usize> = labels.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let of: Vec<usize> = labels
            .iter()
            .map(|l| ids.binary_search(l).expect("label present"))
            .collect();
        let mut centroid: Vec<Option<[f64; 2]>> = vec![None; ids.len()];
        let mut group_within: Vec<Option<f64>> = vec![None; ids.len()];
        for (n, &j) in of.iter().enumerate() {
            match centroid[j] {
                None => centroid[j] = Some(centre[n]),
                Some(c) if c != centre[n] => {
                    return Err(Error::Config(format!(
                        "individual {n} has a centroid differing from its community {}",
                        ids[j]
                    )))
                }
                _ => {}
            }
            if let Some(w) = &within {
                match group_within[j] {
                    None => group_within[j] = Some(w[n]),
                    Some(v) if v != w[n] => {
                        return Err(Error::Config(format!(
                            "individual {n} has a `zbar` differing from its community {}",
                            ids[j]
                        )))
                    }
                    _ => {}
                }
            }
        }
        let groups = Communities {
            of,
            centroid: centroid.into_iter().map(|c| c.expect("non-empty")).collect(),
            within: within
                .as_ref()
                .map(|_| group_within.into_iter().map(|v| v.expect("non-empty")).collect()),
        };
        Ok(Layout::Communities {
            groups,
            centre,
            within,
        })
    }

    /// Whether pair weights depend on a bandwidth parameter.
    pub fn is_spatial(&self) -> bool {
        !matches!(self, Layout::Homogeneous)
    }

    /// Squared distance entering the kernel for the ordered pair `(n, k)`,
    /// from per-individual covariates.
    pub fn pair_d2(&self, n: usize, k: usize) -> f64 {
        match self {
            Layout::Homogeneous => 0.0,
            Layout::Points(z) => dist2(z[n], z[k]),
            Layout::Communities { centre, within, .. } => {
                let d2 = dist2(centre[n], centre[k]);
                match within {
                    Some(w) if d2 == 0.0 => w[n] * w[n],
                    _ => d2,
                }
            }
        }
    }

    /// Literal contact weight for `(n, k)`.
    pub fn weight<S: Real>(&self, n: usize, k: usize, bandwidth: S) -> S {
        match self {
            Layout::Homogeneous => S::one(),
            _ => gaussian_kernel(self.pair_d2(n, k), bandwidth),
        }
    }

    /// Dense weight table for point layouts.
    pub fn pair_table(&self, bandwidth: f64, with_slope: bool) -> Option<PairTable> {
        let Layout::Points(z) = self else {
            return None;
        };
        let n = z.len();
        let inv_norm = 1.0 / (2.0 * std::f64::consts::PI * bandwidth * bandwidth).sqrt();
        let mut weight = vec![0.0; n * n];
        let mut slope = if with_slope { vec![0.0; n * n] } else { Vec::new() };
        for a in 0..n {
            for b in 0..n {
                let (g, dg) = gaussian_kernel_with_slope(dist2(z[a], z[b]), bandwidth, inv_norm);
                weight[a * n + b] = g;
                if with_slope {
                    slope[a * n + b] = dg;
                }
            }
        }
        Some(PairTable { n, weight, slope })
    }

    /// `out[n * stride] = (1/N) sum_k g(n, k) s_k` for every `n`.
    pub fn spread<S: Real>(
        &self,
        s: &[S],
        bandwidth: S,
        pairs: Option<&PairTable>,
        out: &mut [S],
        stride: usize,
    ) {
        let n_pop = s.len();
        let inv_n = 1.0 / n_pop as f64;
        match self {
            Layout::Homogeneous => {
                let mut acc = S::zero();
                for &x in s {
                    acc += x;
                }
                let eta = acc.scale(inv_n);
                for n in 0..n_pop {
                    out[n * stride] = eta;
                }
            }
            Layout::Points(_) => {
                let table = pairs.expect("point layouts prepare a pair table");
                let values: Vec<f64> = if S::DIFFERENTIABLE {
                    s.iter().map(|x| x.value()).collect()
                } else {
                    Vec::new()
                };
                let tangent = bandwidth.tangent_part();
                for n in 0..n_pop {
                    let w = &table.weight[n * n_pop..(n + 1) * n_pop];
                    let mut acc = S::zero();
                    for (&g, &x) in w.iter().zip(s) {
                        acc += x.scale(g);
                    }
                    if S::DIFFERENTIABLE {
                        let dw = &table.slope[n * n_pop..(n + 1) * n_pop];
                        let mut ds = CompensatedSum::<f64>::new();
                        for (&dg, &v) in dw.iter().zip(&values) {
                            ds.add(dg * v);
                        }
                        acc += tangent.scale(ds.total());
                    }
                    out[n * stride] = acc.scale(inv_n);
                }
            }
            Layout::Communities { groups, .. } => {
                let j_count = groups.centroid.len();
                let mut sums = vec![S::zero(); j_count];
                for (k, &x) in s.iter().enumerate() {
                    sums[groups.of[k]] += x;
                }
                let mut per_group = vec![S::zero(); j_count];
                for (j, slot) in per_group.iter_mut().enumerate() {
                    let mut acc = S::zero();
                    for (i, &sum) in sums.iter().enumerate() {
                        let mut d2 = dist2(groups.centroid[j], groups.centroid[i]);
                        if d2 == 0.0 {
                            if let Some(w) = &groups.within {
                                d2 = w[j] * w[j];
                            }
                        }
                        acc += gaussian_kernel(d2, bandwidth) * sum;
                    }
                    *slot = acc.scale(inv_n);
                }
                for n in 0..n_pop {
                    out[n * stride] = per_group[groups.of[n]];
                }
            }
        }
    }

    /// Largest possible contact weight over the bandwidth box.
    pub fn max_weight(&self, min_bandwidth: f64) -> f64 {
        match self {
            Layout::Homogeneous => 1.0,
            _ => 1.0 / (2.0 * std::f64::consts::PI * min_bandwidth * min_bandwidth).sqrt(),
        }
    }
}
