use num_complex::Complex64;

use crate::error::{arg_err, dim_err, Result};
use crate::numerics::ComplexImage;

/// Tolerance on the per-pixel sum of squared sensitivity magnitudes.
const SOS_TOLERANCE: f64 = 1e-6;

/// Complex receive-coil sensitivity maps, one `H×W` plane per coil, whose
/// sum of squared magnitudes is 1 inside the support and 0 outside.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    maps: ComplexImage,
}

impl CoilSensitivities {
    pub fn new(maps: ComplexImage) -> Result<Self> {
        let p = maps.plane_len();
        for i in 0..p {
            let sos: f64 = (0..maps.coils()).map(|c| maps.data()[c * p + i].norm_sqr()).sum();
            if (sos - 1.0).abs() > SOS_TOLERANCE && sos > SOS_TOLERANCE {
                return arg_err(format!(
                    "sensitivity sum-of-squares is {sos} at pixel {i}; expected 0 or 1"
                ));
            }
        }
        Ok(Self { maps })
    }

    /// Rescales arbitrary maps so their sum of squares is 1 wherever it is
    /// non-zero.
    pub fn normalized(mut maps: ComplexImage) -> Result<Self> {
        let p = maps.plane_len();
        let coils = maps.coils();
        for i in 0..p {
            let sos: f64 = (0..coils).map(|c| maps.data()[c * p + i].norm_sqr()).sum();
            if sos > 0.0 {
                let s = 1.0 / sos.sqrt();
                for c in 0..coils {
                    maps.data_mut()[c * p + i] *= s;
                }
            }
        }
        Self::new(maps)
    }

    /// One coil with unit sensitivity everywhere.
    pub fn uniform(height: usize, width: usize) -> Result<Self> {
        let maps = ComplexImage::from_vec(height, width, 1, vec![Complex64::new(1.0, 0.0); height * width])?;
        Ok(Self { maps })
    }

    pub fn n_coils(&self) -> usize {
        self.maps.coils()
    }

    pub fn height(&self) -> usize {
        self.maps.height()
    }

    pub fn width(&self) -> usize {
        self.maps.width()
    }

    pub fn maps(&self) -> &ComplexImage {
        &self.maps
    }

    pub fn map(&self, coil: usize) -> &[Complex64] {
        self.maps.coil_data(coil)
    }

    pub(crate) fn check_plane(&self, img: &ComplexImage) -> Result<()> {
        if !self.maps.same_plane(img) {
            return dim_err(format!(
                "sensitivities are {}x{}, image is {}x{}",
                self.height(),
                self.width(),
                img.height(),
                img.width()
            ));
        }
        Ok(())
    }

    /// `S_c ⊙ x` for every coil.
    pub fn expand(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.check_plane(x)?;
        if x.coils() != 1 {
            return dim_err("coil expansion needs a single-coil image");
        }
        let mut out = self.maps.clone();
        let src = x.data();
        for c in 0..self.n_coils() {
            for (o, v) in out.coil_data_mut(c).iter_mut().zip(src) {
                *o *= v;
            }
        }
        Ok(out)
    }

    /// `Σ_c conj(S_c) ⊙ x_c`, the adjoint of [`CoilSensitivities::expand`].
    pub fn combine(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.check_plane(x)?;
        if x.coils() != self.n_coils() {
            return dim_err(format!(
                "image has {} coils, sensitivities have {}",
                x.coils(),
                self.n_coils()
            ));
        }
        let mut out = ComplexImage::zeros(x.height(), x.width(), 1)?;
        for c in 0..self.n_coils() {
            let (s, xc) = (self.map(c), x.coil_data(c));
            for ((o, sv), xv) in out.data_mut().iter_mut().zip(s).zip(xc) {
                *o += sv.conj() * xv;
            }
        }
        Ok(out)
    }
}
