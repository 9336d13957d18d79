//! Under-sampling masks.
//!
//! Masks live on the unshifted FFT grid (DC at index `(0, 0)`); "central"
//! means lowest signed frequency.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{arg_err, dim_err, Error, Result};
use crate::io::{atomic_write, read_file, Reader};
use crate::numerics::RandomStream;

const MAGIC: &[u8; 5] = b"MASK1";

/// Allowed relative deviation of the kept fraction from `1/R`.
pub const FRACTION_TOLERANCE: f64 = 0.15;

/// Golden angle for radial spoke ordering, `π/φ` radians.
const GOLDEN_ANGLE: f64 = PI * 0.618_033_988_749_894_9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskPattern {
    Cartesian1d,
    PseudoRadial,
    Random2d,
    PoissonDisk,
}

impl MaskPattern {
    pub const ALL: [MaskPattern; 4] = [
        MaskPattern::Cartesian1d,
        MaskPattern::PseudoRadial,
        MaskPattern::Random2d,
        MaskPattern::PoissonDisk,
    ];

    pub fn code(self) -> u8 {
        match self {
            MaskPattern::Cartesian1d => 0,
            MaskPattern::PseudoRadial => 1,
            MaskPattern::Random2d => 2,
            MaskPattern::PoissonDisk => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.code() == code)
            .ok_or_else(|| Error::Format(format!("unknown mask pattern code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskPattern::Cartesian1d => "cartesian1d",
            MaskPattern::PseudoRadial => "pseudo_radial",
            MaskPattern::Random2d => "random2d",
            MaskPattern::PoissonDisk => "poisson_disk",
        }
    }
}

impl std::str::FromStr for MaskPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mask pattern '{s}'")))
    }
}

impl std::fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Boolean k-space keep pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    height: usize,
    width: usize,
    keep: Vec<bool>,
    pattern: MaskPattern,
    acceleration: f64,
}

/// Signed frequency of grid index `i` on an axis of length `n`.
fn signed_freq(i: usize, n: usize) -> isize {
    let i = i as isize;
    let n = n as isize;
    if i < (n + 1) / 2 {
        i
    } else {
        i - n
    }
}

fn wrap(f: isize, n: usize) -> usize {
    f.rem_euclid(n as isize) as usize
}

impl SamplingMask {
    pub fn new(height: usize, width: usize, keep: Vec<bool>, pattern: MaskPattern, acceleration: f64) -> Result<Self> {
        if keep.len() != height * width || height == 0 || width == 0 {
            return dim_err(format!("mask of {height}x{width} needs {} entries", height * width));
        }
        if !(acceleration >= 1.0) || !acceleration.is_finite() {
            return arg_err(format!("acceleration must be >= 1, got {acceleration}"));
        }
        if !keep.iter().any(|&k| k) {
            return arg_err("mask keeps no k-space locations");
        }
        Ok(Self {
            height,
            width,
            keep,
            pattern,
            acceleration,
        })
    }

    pub fn full(height: usize, width: usize, pattern: MaskPattern) -> Result<Self> {
        Self::new(height, width, vec![true; height * width], pattern, 1.0)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn is_kept(&self, row: usize, col: usize) -> bool {
        self.keep[row * self.width + col]
    }

    pub fn pattern(&self) -> MaskPattern {
        self.pattern
    }

    pub fn acceleration(&self) -> f64 {
        self.acceleration
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.keep.len() as f64
    }

    /// Rows with at least one kept entry.
    pub fn kept_rows(&self) -> Vec<usize> {
        (0..self.height)
            .filter(|&r| self.keep[r * self.width..(r + 1) * self.width].iter().any(|&k| k))
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + self.keep.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.push(self.pattern.code());
        out.extend_from_slice(&self.acceleration.to_le_bytes());
        out.extend(self.keep.iter().map(|&k| k as u8));
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC)?;
        let h = r.u32()? as usize;
        let w = r.u32()? as usize;
        let pattern = MaskPattern::from_code(r.u8()?)?;
        let acceleration = r.f64()?;
        let n = h
            .checked_mul(w)
            .ok_or_else(|| Error::Format("mask dimensions overflow".into()))?;
        let keep = r
            .bytes(n)?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Format(format!("mask entry {b} is not 0/1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Self::new(h, w, keep, pattern, acceleration).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}

/// Builds a mask of the requested family with nominal acceleration `r`.
///
/// The centre (`center_fraction` of the rows for Cartesian masks, a central
/// disk of the same area otherwise) is always fully sampled, and the kept
/// fraction lands within ±15% of `1/r`.
pub fn make_mask(
    pattern: MaskPattern,
    r: f64,
    height: usize,
    width: usize,
    center_fraction: f64,
    stream: &mut RandomStream,
) -> Result<SamplingMask> {
    if !(r >= 1.0) || !r.is_finite() {
        return arg_err(format!("acceleration must be >= 1, got {r}"));
    }
    if !(0.0..1.0).contains(&center_fraction) {
        return arg_err(format!("center fraction must be in [0, 1), got {center_fraction}"));
    }
    if height < 2 || width < 2 {
        return dim_err(format!("mask must be at least 2x2, got {height}x{width}"));
    }
    if r == 1.0 {
        return SamplingMask::full(height, width, pattern);
    }
    if center_fraction > 1.0 / r {
        return arg_err(format!(
            "center fraction {center_fraction} exceeds the sampling budget 1/R = {:.4}",
            1.0 / r
        ));
    }
    let keep = match pattern {
        MaskPattern::Cartesian1d => cartesian(r, height, width, center_fraction, stream),
        MaskPattern::PseudoRadial => radial(r, height, width, center_fraction),
        MaskPattern::Random2d => random2d(r, height, width, center_fraction, stream),
        MaskPattern::PoissonDisk => poisson(r, height, width, center_fraction, stream),
    };
    let mask = SamplingMask::new(height, width, keep, pattern, r)?;
    let target = 1.0 / r;
    let frac = mask.kept_fraction();
    if (frac - target).abs() > FRACTION_TOLERANCE * target {
        return arg_err(format!(
            "{pattern} mask reached kept fraction {frac:.4}, outside ±15% of 1/R = {target:.4}"
        ));
    }
    Ok(mask)
}

fn cartesian(r: f64, h: usize, w: usize, cf: f64, stream: &mut RandomStream) -> Vec<bool> {
    let n_keep = ((h as f64 / r).round() as usize).clamp(1, h);
    let n_center = ((cf * h as f64).round() as usize).min(n_keep);
    let mut rows: Vec<usize> = (0..h).collect();
    rows.sort_by_key(|&i| (signed_freq(i, h).unsigned_abs(), signed_freq(i, h) > 0));
    let (center, rest) = rows.split_at(n_center);
    let mut rest = rest.to_vec();
    let mut chosen = center.to_vec();
    // Partial Fisher-Yates for the remaining rows.
    for i in 0..(n_keep - n_center) {
        let j = i + stream.next_index(rest.len() - i);
        rest.swap(i, j);
        chosen.push(rest[i]);
    }
    let mut keep = vec![false; h * w];
    for row in chosen {
        keep[row * w..(row + 1) * w].fill(true);
    }
    keep
}

fn center_disk(h: usize, w: usize, cf: f64, keep: &mut [bool]) {
    let radius = (cf * (h * w) as f64 / PI).sqrt();
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (signed_freq(y, h) as f64, signed_freq(x, w) as f64);
            if fy.hypot(fx) <= radius {
                keep[y * w + x] = true;
            }
        }
    }
}

fn add_spoke(h: usize, w: usize, angle: f64, keep: &mut [bool]) {
    let (c, s) = (angle.cos(), angle.sin());
    let reach = (h.max(w) as f64) * std::f64::consts::SQRT_2 / 2.0;
    let steps = (4.0 * reach).ceil() as i64;
    for i in -steps..=steps {
        let t = i as f64 * 0.25;
        let fx = (t * c).round();
        let fy = (t * s).round();
        if fx < -(w as f64) / 2.0 || fx >= w as f64 / 2.0 || fy < -(h as f64) / 2.0 || fy >= h as f64 / 2.0 {
            continue;
        }
        keep[wrap(fy as isize, h) * w + wrap(fx as isize, w)] = true;
    }
}

fn radial(r: f64, h: usize, w: usize, cf: f64) -> Vec<bool> {
    let target = (h * w) as f64 / r;
    let mut keep = vec![false; h * w];
    center_disk(h, w, cf, &mut keep);
    let mut count = keep.iter().filter(|&&k| k).count() as f64;
    let mut spoke = 0;
    while count < target && spoke < 4 * (h + w) {
        let mut next = keep.clone();
        add_spoke(h, w, spoke as f64 * GOLDEN_ANGLE, &mut next);
        let next_count = next.iter().filter(|&&k| k).count() as f64;
        if next_count - target > target - count {
            break;
        }
        keep = next;
        count = next_count;
        spoke += 1;
    }
    keep
}

fn random2d(r: f64, h: usize, w: usize, cf: f64, stream: &mut RandomStream) -> Vec<bool> {
    let n_keep = ((h * w) as f64 / r).round() as usize;
    let mut keep = vec![false; h * w];
    center_disk(h, w, cf, &mut keep);
    let mut free: Vec<usize> = (0..h * w).filter(|&i| !keep[i]).collect();
    let have = h * w - free.len();
    for i in 0..n_keep.saturating_sub(have).min(free.len()) {
        let j = i + stream.next_index(free.len() - i);
        free.swap(i, j);
        keep[free[i]] = true;
    }
    keep
}

/// Dart throwing over a fixed random visiting order, accepting points at
/// least `radius` apart (in signed-frequency coordinates).
fn dart_throw(order: &[usize], h: usize, w: usize, radius: f64, base: &[bool]) -> Vec<bool> {
    let mut keep = base.to_vec();
    let mut accepted = vec![false; h * w];
    let reach = radius.ceil() as isize;
    let r2 = radius * radius;
    for &i in order {
        if base[i] {
            continue;
        }
        let (y, x) = (signed_freq(i / w, h), signed_freq(i % w, w));
        let mut ok = true;
        'scan: for dy in -reach..=reach {
            for dx in -reach..=reach {
                if ((dy * dy + dx * dx) as f64) >= r2 {
                    continue;
                }
                let (ny, nx) = (y + dy, x + dx);
                if ny < -(h as isize) / 2 || ny >= (h as isize + 1) / 2 || nx < -(w as isize) / 2 || nx >= (w as isize + 1) / 2 {
                    continue;
                }
                if accepted[wrap(ny, h) * w + wrap(nx, w)] {
                    ok = false;
                    break 'scan;
                }
            }
        }
        if ok {
            accepted[i] = true;
            keep[i] = true;
        }
    }
    keep
}

fn poisson(r: f64, h: usize, w: usize, cf: f64, stream: &mut RandomStream) -> Vec<bool> {
    let target = (h * w) as f64 / r;
    let mut base = vec![false; h * w];
    center_disk(h, w, cf, &mut base);
    let mut order: Vec<usize> = (0..h * w).collect();
    for i in (1..order.len()).rev() {
        let j = stream.next_index(i + 1);
        order.swap(i, j);
    }
    let count = |m: &[bool]| m.iter().filter(|&&k| k).count() as f64;
    // Kept count shrinks as the radius grows; `lo` always meets the target.
    let (mut lo, mut hi) = (0.5, (h.max(w) as f64));
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if count(&dart_throw(&order, h, w, mid, &base)) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-4 {
            break;
        }
    }
    // Discrete radii jump in density; drop the latest darts to land on the
    // target, which keeps the minimum spacing.
    let mut keep = dart_throw(&order, h, w, lo, &base);
    let mut excess = (count(&keep) - target.round()) as i64;
    for &i in order.iter().rev() {
        if excess <= 0 {
            break;
        }
        if keep[i] && !base[i] {
            keep[i] = false;
            excess -= 1;
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs() -> RandomStream {
        RandomStream::new(5, 0)
    }

    #[test]
    fn full_sampling_for_r_one() {
        for p in MaskPattern::ALL {
            let m = make_mask(p, 1.0, 16, 16, 0.08, &mut rs()).unwrap();
            assert_eq!(m.kept_count(), 256);
        }
    }

    #[test]
    fn cartesian_keeps_whole_rows_and_center() {
        let m = make_mask(MaskPattern::Cartesian1d, 4.0, 64, 64, 0.0625, &mut rs()).unwrap();
        let rows = m.kept_rows();
        assert!((14..=18).contains(&rows.len()), "{} rows", rows.len());
        for &r in &rows {
            assert!((0..64).all(|c| m.is_kept(r, c)));
        }
        for r in [0, 1, 62, 63] {
            assert!(rows.contains(&r), "central row {r} missing");
        }
    }

    #[test]
    fn radial_fraction() {
        let m = make_mask(MaskPattern::PseudoRadial, 5.0, 64, 64, 0.02, &mut rs()).unwrap();
        let f = m.kept_fraction();
        assert!((0.17..=0.23).contains(&f), "fraction {f}");
        assert!(m.is_kept(0, 0));
    }

    #[test]
    fn every_pattern_hits_its_budget() {
        for p in MaskPattern::ALL {
            for r in [2.0, 3.0, 4.0, 6.0] {
                let m = make_mask(p, r, 64, 64, 0.08f64.min(0.5 / r), &mut rs()).unwrap();
                let f = m.kept_fraction();
                assert!((f * r - 1.0).abs() <= FRACTION_TOLERANCE, "{p} R={r}: {f}");
                assert!(m.is_kept(0, 0), "{p} drops DC");
            }
        }
    }

    #[test]
    fn infeasible_and_invalid_requests() {
        assert!(make_mask(MaskPattern::Random2d, 4.0, 32, 32, 0.5, &mut rs()).is_err());
        assert!(make_mask(MaskPattern::Random2d, 0.5, 32, 32, 0.0, &mut rs()).is_err());
        assert!(make_mask(MaskPattern::Random2d, 2.0, 32, 32, 1.0, &mut rs()).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let m = make_mask(MaskPattern::PoissonDisk, 3.0, 32, 32, 0.05, &mut rs()).unwrap();
        let b = m.encode();
        assert_eq!(&b[..5], b"MASK1");
        assert_eq!(SamplingMask::decode(&b).unwrap(), m);
        assert!(SamplingMask::decode(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn pattern_names_roundtrip() {
        for p in MaskPattern::ALL {
            assert_eq!(p.name().parse::<MaskPattern>().unwrap(), p);
            assert_eq!(MaskPattern::from_code(p.code()).unwrap(), p);
        }
    }
}
