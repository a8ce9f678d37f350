use std::collections::BTreeMap;

use rayon::prelude::*;

use super::rng::Substreams;
use super::scene::{sample_emission, trace_ray, Scene, Termination};
use crate::model::{RadCouplings, RadEntry, SPACE};

/// Rays emitted by an ordinary face.
pub const DEFAULT_RAYS: u64 = 10_000;
/// Rays emitted by faces flagged `high_accuracy`.
pub const HIGH_ACCURACY_RAYS: u64 = 100_000;
/// Master seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_150_101;

/// Rays per work item handed to the thread pool.
const CHUNK: u64 = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct RayBudget {
    pub default: u64,
    pub high_accuracy: u64,
    /// Per-face overrides by face id.
    pub per_face: BTreeMap<String, u64>,
}

impl Default for RayBudget {
    fn default() -> Self {
        RayBudget {
            default: DEFAULT_RAYS,
            high_accuracy: HIGH_ACCURACY_RAYS,
            per_face: BTreeMap::new(),
        }
    }
}

impl RayBudget {
    pub fn uniform(rays: u64) -> Self {
        RayBudget {
            default: rays,
            high_accuracy: rays,
            per_face: BTreeMap::new(),
        }
    }

    pub fn rays_for(&self, id: &str, high_accuracy: bool) -> u64 {
        if let Some(&n) = self.per_face.get(id) {
            return n;
        }
        if high_accuracy {
            self.high_accuracy
        } else {
            self.default
        }
    }
}

/// Face-to-face exchange factors GR in m², with a trailing space column.
#[derive(Debug, Clone, PartialEq)]
pub struct RadCouplingMatrix {
    pub face_ids: Vec<String>,
    /// A_i ε_i per face, m².
    pub emissive_area: Vec<f64>,
    pub rays: Vec<u64>,
    pub seed: u64,
    /// Rays forced to absorption by the bounce cap.
    pub capped_rays: u64,
    pub symmetrized: bool,
    gr: Vec<f64>,
    stderr: Vec<f64>,
}

impl RadCouplingMatrix {
    pub fn len(&self) -> usize {
        self.face_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.face_ids.is_empty()
    }

    /// Column index of the space sink.
    pub fn space(&self) -> usize {
        self.len()
    }

    fn at(&self, i: usize, j: usize) -> usize {
        i * (self.len() + 1) + j
    }

    /// GR(i, j); `j == self.space()` addresses the space column.
    pub fn gr(&self, i: usize, j: usize) -> f64 {
        self.gr[self.at(i, j)]
    }

    pub fn stderr(&self, i: usize, j: usize) -> f64 {
        self.stderr[self.at(i, j)]
    }

    /// Fraction of the rays emitted by `i` that ended at `j` (or space).
    pub fn fraction(&self, i: usize, j: usize) -> f64 {
        if self.emissive_area[i] == 0.0 {
            0.0
        } else {
            self.gr(i, j) / self.emissive_area[i]
        }
    }

    /// Σ_j GR(i, j) + GR(i, space).
    pub fn row_total(&self, i: usize) -> f64 {
        (0..=self.len()).map(|j| self.gr(i, j)).sum()
    }
}

/// Traces every active face's ray budget and returns the raw (not yet
/// reciprocal) exchange factors GR(i,j) = A_i ε_i · n_ij / N_i.
///
/// Work is spread over the current rayon pool; results do not depend on the
/// number of workers.
pub fn compute_raw_exchange_factors(scene: &Scene, budget: &RayBudget, master_seed: u64) -> RadCouplingMatrix {
    let n = scene.faces.len();
    let streams = Substreams::new(master_seed);
    let rays: Vec<u64> = scene
        .faces
        .iter()
        .map(|f| {
            if f.epsilon > 0.0 && f.area > 0.0 {
                budget.rays_for(&f.id, f.high_accuracy)
            } else {
                0
            }
        })
        .collect();

    let tasks: Vec<(usize, u64, u64)> = rays
        .iter()
        .enumerate()
        .flat_map(|(i, &total)| {
            (0..total.div_ceil(CHUNK)).map(move |c| (i, c * CHUNK, ((c + 1) * CHUNK).min(total)))
        })
        .collect();

    let partial: Vec<(usize, Vec<u64>, u64)> = tasks
        .par_iter()
        .map(|&(face, start, end)| {
            let mut counts = vec![0u64; n + 1];
            let mut capped = 0u64;
            for r in start..end {
                let mut rng = streams.stream(face as u64, r);
                let ray = sample_emission(scene, face, &mut rng);
                match trace_ray(scene, ray, &mut rng) {
                    Termination::Absorbed { face: j, capped: c } => {
                        counts[j] += 1;
                        capped += u64::from(c);
                    }
                    Termination::Escaped => counts[n] += 1,
                }
            }
            (face, counts, capped)
        })
        .collect();

    let mut counts = vec![0u64; n * (n + 1)];
    let mut capped_rays = 0;
    for (face, c, capped) in partial {
        capped_rays += capped;
        for (j, v) in c.into_iter().enumerate() {
            counts[face * (n + 1) + j] += v;
        }
    }

    let emissive_area: Vec<f64> = scene.faces.iter().map(|f| f.area * f.epsilon).collect();
    let mut gr = vec![0.0; n * (n + 1)];
    let mut stderr = vec![0.0; n * (n + 1)];
    for i in 0..n {
        if rays[i] == 0 {
            continue;
        }
        let total = rays[i] as f64;
        for j in 0..=n {
            let k = i * (n + 1) + j;
            let p = counts[k] as f64 / total;
            gr[k] = emissive_area[i] * p;
            stderr[k] = emissive_area[i] * (p * (1.0 - p) / total).sqrt();
        }
    }

    RadCouplingMatrix {
        face_ids: scene.faces.iter().map(|f| f.id.clone()).collect(),
        emissive_area,
        rays,
        seed: master_seed,
        capped_rays,
        symmetrized: false,
        gr,
        stderr,
    }
}

/// Raw exchange factors followed by [`symmetrize`].
pub fn compute_exchange_factors(scene: &Scene, budget: &RayBudget, master_seed: u64) -> RadCouplingMatrix {
    symmetrize(&compute_raw_exchange_factors(scene, budget, master_seed))
}

/// Enforces reciprocity by averaging GR(i,j) and GR(j,i), then rebuilds the
/// space column so each row again sums to A_i ε_i.
///
/// A row whose raw space entry is exactly zero (no emitted ray escaped) is
/// treated as sealed and keeps a zero space coupling. Space entries are
/// clamped at zero.
pub fn symmetrize(m: &RadCouplingMatrix) -> RadCouplingMatrix {
    let n = m.len();
    let mut out = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let g = 0.5 * (m.gr(i, j) + m.gr(j, i));
            let s = 0.5 * m.stderr(i, j).hypot(m.stderr(j, i));
            let (a, b) = (out.at(i, j), out.at(j, i));
            out.gr[a] = g;
            out.gr[b] = g;
            out.stderr[a] = s;
            out.stderr[b] = s;
        }
    }
    for i in 0..n {
        let k = out.at(i, n);
        if m.gr(i, n) == 0.0 {
            continue;
        }
        let exchanged: f64 = (0..n).map(|j| out.gr(i, j)).sum();
        out.gr[k] = (m.emissive_area[i] - exchanged).max(0.0);
    }
    out.symmetrized = true;
    out
}

impl RadCouplingMatrix {
    /// Builds a symmetric matrix from raw values; used for tests and for
    /// re-reading couplings.
    pub fn from_dense(face_ids: Vec<String>, emissive_area: Vec<f64>, gr: Vec<f64>) -> Self {
        let n = face_ids.len();
        assert_eq!(gr.len(), n * (n + 1));
        RadCouplingMatrix {
            rays: vec![0; n],
            seed: 0,
            capped_rays: 0,
            symmetrized: false,
            stderr: vec![0.0; gr.len()],
            face_ids,
            emissive_area,
            gr,
        }
    }

    /// Serializable coupling block: one entry per unordered face pair with
    /// non-zero GR plus the space entries. Raw matrices are symmetrized first.
    pub fn to_block(&self) -> RadCouplings {
        let m = if self.symmetrized {
            self.clone()
        } else {
            symmetrize(self)
        };
        let n = m.len();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let g = m.gr(i, j);
                if g > 0.0 {
                    entries.push(RadEntry {
                        from: m.face_ids[i].clone(),
                        to: m.face_ids[j].clone(),
                        gr: g,
                        stderr: Some(m.stderr(i, j)),
                    });
                }
            }
            let g = m.gr(i, n);
            if g > 0.0 {
                entries.push(RadEntry {
                    from: m.face_ids[i].clone(),
                    to: SPACE.to_string(),
                    gr: g,
                    stderr: Some(m.stderr(i, n)),
                });
            }
        }
        RadCouplings {
            seed: Some(m.seed),
            rays: m
                .face_ids
                .iter()
                .cloned()
                .zip(m.rays.iter().copied())
                .filter(|(_, r)| *r > 0)
                .collect(),
            entries,
        }
    }

    /// Diagnostics rows `(from, to, gr, stderr, rays)` of the raw matrix in
    /// face order, including zero entries towards faces that were reached.
    pub fn diagnostics(&self) -> Vec<(String, String, f64, f64, u64)> {
        let n = self.len();
        let mut rows = Vec::new();
        for i in 0..n {
            for j in 0..=n {
                let g = self.gr(i, j);
                if g == 0.0 {
                    continue;
                }
                let to = if j == n {
                    SPACE.to_string()
                } else {
                    self.face_ids[j].clone()
                };
                rows.push((self.face_ids[i].clone(), to, g, self.stderr(i, j), self.rays[i]));
            }
        }
        rows
    }
}
