//! Sparse 1-D linear operators applied separably to row-major `f64` planes,
//! with their adjoints. Shared by the pyramid, SSIM window and resamplers.

/// `rows[o]` lists `(input index, weight)` pairs producing output sample `o`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Taps1d {
    in_len: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Taps1d {
    pub fn new(in_len: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        debug_assert!(rows.iter().flatten().all(|&(i, _)| i < in_len));
        Taps1d { in_len, rows }
    }

    /// Builds each row from `(signed index, weight)` taps, clamping indices to
    /// the valid range (edge replication) and merging duplicates.
    pub fn clamped<I>(in_len: usize, out_len: usize, mut taps: impl FnMut(usize) -> I) -> Self
    where
        I: IntoIterator<Item = (isize, f64)>,
    {
        let last = in_len as isize - 1;
        let rows = (0..out_len)
            .map(|o| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (i, wt) in taps(o) {
                    let i = i.clamp(0, last) as usize;
                    match row.iter_mut().find(|(j, _)| *j == i) {
                        Some(e) => e.1 += wt,
                        None => row.push((i, wt)),
                    }
                }
                row
            })
            .collect();
        Taps1d { in_len, rows }
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.rows.len()
    }

    #[cfg(test)]
    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Along x: `h × in_len` → `h × out_len`.
    pub fn apply_x(&self, src: &[f64], h: usize) -> Vec<f64> {
        let (wi, wo) = (self.in_len, self.out_len());
        let mut out = vec![0.0; h * wo];
        for y in 0..h {
            let s = &src[y * wi..(y + 1) * wi];
            for (o, row) in out[y * wo..(y + 1) * wo].iter_mut().zip(&self.rows) {
                *o = row.iter().map(|&(i, wt)| wt * s[i]).sum();
            }
        }
        out
    }

    /// Along y: `in_len × w` → `out_len × w`.
    pub fn apply_y(&self, src: &[f64], w: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.out_len() * w];
        for (o, row) in self.rows.iter().enumerate() {
            let dst = &mut out[o * w..(o + 1) * w];
            for &(i, wt) in row {
                for (d, &s) in dst.iter_mut().zip(&src[i * w..(i + 1) * w]) {
                    *d += wt * s;
                }
            }
        }
        out
    }

    /// Adjoint of [`apply_x`](Self::apply_x): `h × out_len` → `h × in_len`.
    pub fn adjoint_x(&self, g: &[f64], h: usize) -> Vec<f64> {
        let (wi, wo) = (self.in_len, self.out_len());
        let mut out = vec![0.0; h * wi];
        for y in 0..h {
            let d = &mut out[y * wi..(y + 1) * wi];
            for (gv, row) in g[y * wo..(y + 1) * wo].iter().zip(&self.rows) {
                for &(i, wt) in row {
                    d[i] += wt * gv;
                }
            }
        }
        out
    }

    /// Adjoint of [`apply_y`](Self::apply_y).
    pub fn adjoint_y(&self, g: &[f64], w: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.in_len * w];
        for (o, row) in self.rows.iter().enumerate() {
            let src = &g[o * w..(o + 1) * w];
            for &(i, wt) in row {
                for (d, &s) in out[i * w..(i + 1) * w].iter_mut().zip(src) {
                    *d += wt * s;
                }
            }
        }
        out
    }
}

/// A separable 2-D operator: x pass, then y pass.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sep2d {
    pub x: Taps1d,
    pub y: Taps1d,
}

impl Sep2d {
    pub fn out_dims(&self) -> (usize, usize) {
        (self.y.out_len(), self.x.out_len())
    }

    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        let tmp = self.x.apply_x(src, self.y.in_len());
        self.y.apply_y(&tmp, self.x.out_len())
    }

    pub fn adjoint(&self, g: &[f64]) -> Vec<f64> {
        let tmp = self.y.adjoint_y(g, self.x.out_len());
        self.x.adjoint_x(&tmp, self.y.in_len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adjoint_identity() {
        // <A u, v> == <u, Aᵀ v>
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let op = Sep2d {
            x: Taps1d::clamped(7, 4, |o| {
                [
                    (2 * o as isize - 1, 0.25),
                    (2 * o as isize, 0.5),
                    (2 * o as isize + 1, 0.25),
                ]
            }),
            y: Taps1d::clamped(5, 9, |o| [(o as isize / 2, 0.7), (o as isize / 2 + 1, 0.3)]),
        };
        let u: Vec<f64> = (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let au = op.apply(&u);
        let atv = op.adjoint(&v);
        let lhs: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&atv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn clamping_merges_taps() {
        let t = Taps1d::clamped(3, 1, |_| [(-2, 1.0), (-1, 2.0), (0, 3.0)]);
        assert_eq!(t.rows()[0], vec![(0, 6.0)]);
    }
}
