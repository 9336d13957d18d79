//! Output helpers: atomic text/PNG writes, CSV rows and dataset manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use ebmrec_core::io::{atomic_write, load_cimg};
use ebmrec_core::ComplexImage;

/// Magnification applied to error maps.
pub const ERROR_SCALE: f64 = 5.0;

pub const METRICS_HEADER: &str = "image_id,mask,R,psnr_db,ssim";

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn encode_gray(width: usize, height: usize, pixels: &[u8], text: &[(&str, String)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        for (k, v) in text {
            enc.add_text_chunk(k.to_string(), v.clone())?;
        }
        let mut w = enc.write_header()?;
        w.write_image_data(pixels)?;
        w.finish()?;
    }
    Ok(out)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn peak(img: &ComplexImage) -> f64 {
    img.magnitude().into_iter().fold(0.0, f64::max)
}

/// Root-sum-of-squares magnitude per pixel.
fn combined_magnitude(img: &ComplexImage) -> Vec<f64> {
    img.rss_combine().magnitude()
}

/// Magnitude PNG with `white` mapped to 255.
pub fn write_magnitude_png(path: &Path, img: &ComplexImage, white: f64) -> Result<()> {
    let white = if white > 0.0 { white } else { 1.0 };
    let px: Vec<u8> = combined_magnitude(img).iter().map(|m| to_u8(m / white)).collect();
    let bytes = encode_gray(img.width(), img.height(), &px, &[("white", format!("{white}"))])?;
    atomic_write(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

/// `|result − reference|·5` on the magnitude scale of the reference,
/// clipped at white. The factor is recorded in an `error_scale` text chunk.
pub fn write_error_png(path: &Path, result: &ComplexImage, reference: &ComplexImage) -> Result<()> {
    let white = peak(reference);
    let white = if white > 0.0 { white } else { 1.0 };
    let a = combined_magnitude(result);
    let b = combined_magnitude(reference);
    if a.len() != b.len() {
        bail!("error map: result and reference differ in size");
    }
    let px: Vec<u8> = a.iter().zip(&b).map(|(x, y)| to_u8((x - y).abs() * ERROR_SCALE / white)).collect();
    let text = [("error_scale", format!("{ERROR_SCALE}")), ("white", format!("{white}"))];
    let bytes = encode_gray(reference.width(), reference.height(), &px, &text)?;
    atomic_write(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn reference_peak(img: &ComplexImage) -> f64 {
    peak(img)
}

/// One metrics CSV row.
pub fn metrics_row(id: &str, mask: &str, r: &str, psnr: f64, ssim: f64) -> String {
    format!("{id},{mask},{r},{psnr:.6},{ssim:.6}")
}

pub fn csv(header: &str, rows: &[String]) -> String {
    let mut s = String::with_capacity(header.len() + rows.len() * 40);
    s.push_str(header);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{r}");
    }
    s
}

/// One line of a dataset manifest: `id,split,file`, with `file` relative
/// to the manifest's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub split: String,
    pub file: String,
}

pub const MANIFEST_HEADER: &str = "id,split,file";

pub fn manifest_text(entries: &[ManifestEntry]) -> String {
    let rows: Vec<String> = entries.iter().map(|e| format!("{},{},{}", e.id, e.split, e.file)).collect();
    csv(MANIFEST_HEADER, &rows)
}

pub struct Manifest {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            bail!("{}: expected header '{MANIFEST_HEADER}'", path.display());
        }
        let entries = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 3 {
                    bail!("{}: line {} should have 3 fields", path.display(), i + 2);
                }
                Ok(ManifestEntry {
                    id: f[0].into(),
                    split: f[1].into(),
                    file: f[2].into(),
                })
            })
            .collect::<Result<_>>()?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { dir, entries })
    }

    pub fn split<'a>(&'a self, split: &'a str) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<ComplexImage> {
        let path = self.dir.join(&entry.file);
        load_cimg(&path).with_context(|| format!("loading {}", path.display()))
    }
}
