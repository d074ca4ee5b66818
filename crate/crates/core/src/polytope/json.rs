use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{HPolytope, Polytope, PolytopeError};

/// Serialised form. Either representation may be absent; `normals` is
/// row-major, one facet per row.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolytopeJson {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<f64>>,
}

impl From<&Polytope> for PolytopeJson {
    fn from(p: &Polytope) -> Self {
        let h = p.hrep();
        let (normals, offsets) = if p.is_empty() {
            (None, None)
        } else {
            (
                Some((0..h.len()).map(|k| h.normal(k).iter().cloned().collect()).collect()),
                Some(h.offsets().iter().cloned().collect()),
            )
        };
        PolytopeJson {
            dim: p.dim(),
            vertices: Some(p.vertices().iter().map(|v| v.iter().cloned().collect()).collect()),
            normals,
            offsets,
        }
    }
}

impl PolytopeJson {
    /// Rebuilds from the vertices when present, else from the facets.
    pub fn to_polytope(&self) -> Result<Polytope, PolytopeError> {
        let Some(vs) = &self.vertices else {
            return Polytope::from_h(self.hrep()?);
        };
        let verts = vs
            .iter()
            .map(|v| {
                if v.len() != self.dim {
                    Err(PolytopeError::DimensionMismatch {
                        expected: self.dim,
                        found: v.len(),
                    })
                } else {
                    Ok(DVector::from_row_slice(v))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Polytope::from_vertices_dim(verts, self.dim)
    }

    pub fn hrep(&self) -> Result<HPolytope, PolytopeError> {
        let (Some(rows), Some(offsets)) = (&self.normals, &self.offsets) else {
            return Ok(HPolytope::infeasible(self.dim));
        };
        if rows.len() != offsets.len() {
            return Err(PolytopeError::DimensionMismatch {
                expected: rows.len(),
                found: offsets.len(),
            });
        }
        let mut a = DMatrix::zeros(rows.len(), self.dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.dim {
                return Err(PolytopeError::DimensionMismatch {
                    expected: self.dim,
                    found: row.len(),
                });
            }
            for (j, x) in row.iter().enumerate() {
                a[(i, j)] = *x;
            }
        }
        HPolytope::new(a, DVector::from_row_slice(offsets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let p = Polytope::cube(2, 1.5).unwrap();
        let j = PolytopeJson::from(&p);
        let s = serde_json::to_string(&j).unwrap();
        let back: PolytopeJson = serde_json::from_str(&s).unwrap();
        let q = back.to_polytope().unwrap();
        assert_eq!(p, q);
        assert_eq!(back.hrep().unwrap().len(), 4);
    }

    #[test]
    fn facets_only() {
        let s = r#"{"dim": 1, "normals": [[1.0], [-1.0]], "offsets": [2.0, 1.0]}"#;
        let p = serde_json::from_str::<PolytopeJson>(s).unwrap().to_polytope().unwrap();
        assert_eq!(p.num_vertices(), 2);
        assert!(p.contains(&DVector::from_element(1, -1.0), 1e-12));
    }
}
