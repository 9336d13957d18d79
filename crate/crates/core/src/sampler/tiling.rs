use crate::energy_net::EnergyModel;
use crate::error::{arg_err, dim_err, Result};
use crate::numerics::RealTensor;

/// Patch-wise evaluation: square tiles of side `tile` overlapping by
/// `overlap` pixels; gradients are averaged where tiles overlap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tiling {
    pub tile: usize,
    pub overlap: usize,
}

impl Default for Tiling {
    fn default() -> Self {
        Self { tile: 32, overlap: 8 }
    }
}

impl Tiling {
    fn offsets(&self, n: usize) -> Result<Vec<usize>> {
        if self.tile == 0 || self.overlap >= self.tile {
            return arg_err(format!("invalid tiling {}/{}", self.tile, self.overlap));
        }
        if n < self.tile {
            return dim_err(format!("image side {n} smaller than tile {}", self.tile));
        }
        let stride = self.tile - self.overlap;
        let mut out: Vec<usize> = (0..).map(|i| i * stride).take_while(|&o| o + self.tile <= n).collect();
        if *out.last().expect("n >= tile") + self.tile < n {
            out.push(n - self.tile);
        }
        Ok(out)
    }
}

fn crop(x: &RealTensor, y0: usize, x0: usize, t: usize) -> Result<RealTensor> {
    let (c, w) = (x.shape()[0], x.shape()[2]);
    let h = x.shape()[1];
    let mut data = Vec::with_capacity(c * t * t);
    for ch in 0..c {
        for r in y0..y0 + t {
            let base = (ch * h + r) * w + x0;
            data.extend_from_slice(&x.data()[base..base + t]);
        }
    }
    RealTensor::from_vec(&[c, t, t], data)
}

/// Gradient of the tile energies, averaged over overlapping tiles.
pub fn tiled_grad<M: EnergyModel + ?Sized>(model: &M, x: &RealTensor, sigma: f64, tiling: Tiling) -> Result<RealTensor> {
    if x.shape().len() != 3 {
        return dim_err(format!("expected (C, H, W), got {:?}", x.shape()));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let t = tiling.tile;
    let mut grad = vec![0.0; c * h * w];
    let mut hits = vec![0u32; h * w];
    for &y0 in &tiling.offsets(h)? {
        for &x0 in &tiling.offsets(w)? {
            let g = model.grad_at(&crop(x, y0, x0, t)?, sigma)?;
            for ch in 0..c {
                for r in 0..t {
                    for q in 0..t {
                        grad[(ch * h + y0 + r) * w + x0 + q] += g.data()[(ch * t + r) * t + q];
                    }
                }
            }
            for r in 0..t {
                for q in 0..t {
                    hits[(y0 + r) * w + x0 + q] += 1;
                }
            }
        }
    }
    for (i, v) in grad.iter_mut().enumerate() {
        *v /= hits[i % (h * w)] as f64;
    }
    RealTensor::from_vec(x.shape(), grad)
}

/// Wraps a model so its gradient is evaluated tile by tile.
pub struct Tiled<'a, M: ?Sized> {
    pub model: &'a M,
    pub tiling: Tiling,
}

impl<M: EnergyModel + ?Sized> EnergyModel for Tiled<'_, M> {
    /// Sum of tile energies.
    fn energy_at(&self, x: &RealTensor, sigma: f64) -> Result<f64> {
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let mut total = 0.0;
        for &y0 in &self.tiling.offsets(h)? {
            for &x0 in &self.tiling.offsets(w)? {
                total += self.model.energy_at(&crop(x, y0, x0, self.tiling.tile)?, sigma)?;
            }
        }
        Ok(total)
    }

    fn grad_at(&self, x: &RealTensor, sigma: f64) -> Result<RealTensor> {
        tiled_grad(self.model, x, sigma, self.tiling)
    }
}
