//! Point sets with hyperparameter-independent pair geometry.
//!
//! Likelihood optimization re-evaluates the same Gram over and over with
//! different hyperparameters. Dot products (composite families) and squared
//! distances (shallow families) do not depend on the hyperparameters, so they
//! are tabulated once when the set is wide enough for that to pay off.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::kernel::{dot, sqdist, KernelFamily, KernelSpec};

/// Largest point count whose pair table is stored.
const TABLE_LIMIT: usize = 4096;
/// Below this input width the geometry is cheaper to recompute than to look up.
const TABLE_MIN_DIM: usize = 3;

pub(crate) struct PointSet {
    dim: usize,
    len: usize,
    coords: Vec<f64>,
    composite: bool,
    table: Option<Vec<f64>>,
}

/// Diagonal recursion values for every point in a set, flattened.
pub(crate) struct Chains {
    layers: usize,
    values: Vec<f64>,
    aux: Vec<f64>,
    shallow_diag: Option<f64>,
}

impl Chains {
    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        match self.shallow_diag {
            Some(v) => v,
            None => self.values[i * (self.layers + 1) + self.layers],
        }
    }

    #[inline]
    fn aux(&self, i: usize) -> &[f64] {
        &self.aux[i * self.layers..(i + 1) * self.layers]
    }
}

impl PointSet {
    pub fn new(points: DMatrix<f64>, family: KernelFamily) -> Self {
        let len = points.nrows();
        let dim = points.ncols();
        let mut coords = Vec::with_capacity(len * dim);
        for r in points.row_iter() {
            coords.extend(r.iter().copied());
        }
        Self::from_coords(coords, len, dim, family)
    }

    /// Rows `x_j + u_a` ordered as `j * m + a`.
    pub fn perturbed(x: &DMatrix<f64>, draws: &DMatrix<f64>, family: KernelFamily) -> Self {
        let (n, dim) = x.shape();
        let m = draws.nrows();
        let mut coords = Vec::with_capacity(n * m * dim);
        for j in 0..n {
            for a in 0..m {
                for k in 0..dim {
                    coords.push(x[(j, k)] + draws[(a, k)]);
                }
            }
        }
        Self::from_coords(coords, n * m, dim, family)
    }

    fn from_coords(coords: Vec<f64>, len: usize, dim: usize, family: KernelFamily) -> Self {
        let mut set = PointSet {
            dim,
            len,
            coords,
            composite: family.is_composite(),
            table: None,
        };
        if dim >= TABLE_MIN_DIM && len <= TABLE_LIMIT {
            let mut table = vec![0.0; len * len];
            for i in 0..len {
                for j in i..len {
                    let g = set.compute_geometry(i, j);
                    table[i * len + j] = g;
                    table[j * len + i] = g;
                }
            }
            set.table = Some(table);
        }
        set
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn compute_geometry(&self, i: usize, j: usize) -> f64 {
        if self.composite {
            dot(self.point(i), self.point(j))
        } else {
            sqdist(self.point(i), self.point(j))
        }
    }

    #[inline]
    fn geometry(&self, i: usize, j: usize) -> f64 {
        match &self.table {
            Some(t) => t[i * self.len + j],
            None => self.compute_geometry(i, j),
        }
    }

    pub fn diag_chains(&self, spec: &KernelSpec) -> Result<Chains> {
        if spec.family.is_shallow() {
            return Ok(Chains {
                layers: 0,
                values: Vec::new(),
                aux: Vec::new(),
                shallow_diag: Some(spec.signal_var),
            });
        }
        let layers = spec.layers();
        let mut values = Vec::with_capacity(self.len * (layers + 1));
        let mut aux = Vec::with_capacity(self.len * layers);
        for i in 0..self.len {
            let p = self.point(i);
            let chain = spec.diag_chain(dot(p, p))?;
            values.extend_from_slice(&chain.values);
            aux.extend_from_slice(&chain.aux);
        }
        Ok(Chains { layers, values, aux, shallow_diag: None })
    }

    /// Off-diagonal covariance between two points of the set.
    #[inline]
    pub fn pair(&self, spec: &KernelSpec, chains: &Chains, i: usize, j: usize) -> Result<f64> {
        let g = self.geometry(i, j);
        if !self.composite {
            return Ok(spec.shallow_from_sqdist(g));
        }
        let mut c = spec.base_from_dot(g);
        for (&a, &b) in chains.aux(i).iter().zip(chains.aux(j)) {
            c = spec.layer_off(a, b, c)?;
        }
        Ok(c)
    }

    /// Covariance between a point of the set and an outside point `q`.
    #[inline]
    pub fn pair_external(
        &self,
        spec: &KernelSpec,
        chains: &Chains,
        i: usize,
        q: &[f64],
        q_aux: &[f64],
    ) -> Result<f64> {
        let p = self.point(i);
        if !self.composite {
            return Ok(spec.shallow_from_sqdist(sqdist(p, q)));
        }
        let mut c = spec.base_from_dot(dot(p, q));
        for (&a, &b) in chains.aux(i).iter().zip(q_aux) {
            c = spec.layer_off(a, b, c)?;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_and_direct_geometry_agree() {
        let x = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.5);
        for family in [KernelFamily::ArcCosine, KernelFamily::Rbf] {
            let set = PointSet::new(x.clone(), family);
            assert!(set.table.is_some());
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(set.geometry(i, j), set.compute_geometry(i, j));
                }
            }
        }
    }

    #[test]
    fn perturbed_ordering() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 5.0]);
        let u = DMatrix::from_row_slice(3, 1, &[0.1, 0.2, 0.3]);
        let set = PointSet::perturbed(&x, &u, KernelFamily::Rbf);
        assert_eq!(set.len, 6);
        assert_eq!(set.point(4), &[5.2]);
    }
}
