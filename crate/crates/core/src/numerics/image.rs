use num_complex::Complex64;

use super::RealTensor;
use crate::error::{dim_err, Error, Result};

/// Smallest accepted edge length.
pub const MIN_EDGE: usize = 4;

/// Complex-valued image stack of shape `coils × height × width`, stored
/// coil-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    coils: usize,
    data: Vec<Complex64>,
}

fn check_dims(height: usize, width: usize, coils: usize) -> Result<()> {
    if height < MIN_EDGE || width < MIN_EDGE {
        return dim_err(format!(
            "image must be at least {MIN_EDGE}x{MIN_EDGE}, got {height}x{width}"
        ));
    }
    if coils == 0 {
        return dim_err("image needs at least one coil");
    }
    Ok(())
}

impl ComplexImage {
    pub fn zeros(height: usize, width: usize, coils: usize) -> Result<Self> {
        check_dims(height, width, coils)?;
        Ok(Self {
            height,
            width,
            coils,
            data: vec![Complex64::new(0.0, 0.0); height * width * coils],
        })
    }

    pub fn from_vec(height: usize, width: usize, coils: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dims(height, width, coils)?;
        if data.len() != height * width * coils {
            return dim_err(format!(
                "{coils}x{height}x{width} image needs {} values, got {}",
                height * width * coils,
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pixel {i} of image")));
        }
        Ok(Self {
            height,
            width,
            coils,
            data,
        })
    }

    /// Builds a single-coil image from a `(2, H, W)` or `(3, H, W)` tensor;
    /// channel 0 is the real part, channel 1 the imaginary part and any
    /// further channels are ignored.
    pub fn from_channels(t: &RealTensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[0] < 2 {
            return dim_err(format!("expected (2|3, H, W) tensor, got {s:?}"));
        }
        let (h, w) = (s[1], s[2]);
        let plane = h * w;
        let d = t.data();
        let data = (0..plane)
            .map(|i| Complex64::new(d[i], d[plane + i]))
            .collect();
        Self::from_vec(h, w, 1, data)
    }

    /// `(2, H, W)` real/imaginary tensor of one coil.
    pub fn to_channels(&self, coil: usize) -> RealTensor {
        let plane = self.height * self.width;
        let src = &self.data[coil * plane..(coil + 1) * plane];
        let mut out = Vec::with_capacity(2 * plane);
        out.extend(src.iter().map(|c| c.re));
        out.extend(src.iter().map(|c| c.im));
        RealTensor::from_vec(&[2, self.height, self.width], out)
            .expect("finite image maps to finite tensor")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn coil_data(&self, coil: usize) -> &[Complex64] {
        let p = self.plane_len();
        &self.data[coil * p..(coil + 1) * p]
    }

    pub fn coil_data_mut(&mut self, coil: usize) -> &mut [Complex64] {
        let p = self.plane_len();
        &mut self.data[coil * p..(coil + 1) * p]
    }

    /// Copy of a single coil as a one-coil image.
    pub fn coil(&self, coil: usize) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            coils: 1,
            data: self.coil_data(coil).to_vec(),
        }
    }

    /// Stacks equally sized single-coil images into one multi-coil image.
    pub fn stack(images: &[ComplexImage]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero images".into()))?;
        let mut data = Vec::with_capacity(first.data.len() * images.len());
        for im in images {
            if !im.same_plane(first) {
                return dim_err("stacked images differ in size");
            }
            data.extend_from_slice(&im.data);
        }
        Self::from_vec(first.height, first.width, data.len() / first.plane_len(), data)
    }

    pub fn same_plane(&self, other: &ComplexImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn same_shape(&self, other: &ComplexImage) -> bool {
        self.same_plane(other) && self.coils == other.coils
    }

    /// Pixel magnitudes, coil-major.
    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|c| c.norm()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.is_finite())
    }

    pub fn scale(&mut self, s: Complex64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `‖self − other‖₂`.
    pub fn distance(&self, other: &ComplexImage) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Root-sum-of-squares coil combination with the phase of the first
    /// coil.
    pub fn rss_combine(&self) -> ComplexImage {
        let p = self.plane_len();
        let data = (0..p)
            .map(|i| {
                let mag = (0..self.coils)
                    .map(|c| self.data[c * p + i].norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                let phase = self.data[i].arg();
                Complex64::from_polar(mag, phase)
            })
            .collect();
        ComplexImage {
            height: self.height,
            width: self.width,
            coils: 1,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_and_mismatched() {
        assert!(ComplexImage::zeros(2, 8, 1).is_err());
        assert!(ComplexImage::zeros(8, 8, 0).is_err());
        assert!(ComplexImage::from_vec(4, 4, 1, vec![Complex64::new(0.0, 0.0); 15]).is_err());
        let nan = vec![Complex64::new(f64::NAN, 0.0); 16];
        assert!(matches!(
            ComplexImage::from_vec(4, 4, 1, nan),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn channel_conversion_is_lossless() {
        let data: Vec<_> = (0..16)
            .map(|i| Complex64::new(i as f64 * 0.3 - 1.0, 0.7 - i as f64 * 0.11))
            .collect();
        let im = ComplexImage::from_vec(4, 4, 1, data).unwrap();
        let back = ComplexImage::from_channels(&im.to_channels(0)).unwrap();
        assert_eq!(im, back);
    }

    #[test]
    fn rss_of_single_coil_is_identity() {
        let data: Vec<_> = (0..16)
            .map(|i| Complex64::from_polar(1.0 + i as f64, 0.1 * i as f64))
            .collect();
        let im = ComplexImage::from_vec(4, 4, 1, data).unwrap();
        let rss = im.rss_combine();
        assert!(im.distance(&rss) < 1e-12);
    }
}
