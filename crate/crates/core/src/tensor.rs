//! Feature maps and images.
//!
//! A feature map is `(d, h, w)`; an image is an `(h, w)` pixel grid. Decoded
//! pixels live in `[0, 1]`. Resampling between grids uses nearest-neighbor
//! replication upward and box averaging downward; for integer resolution
//! ratios the two are adjoint, so `down(up(x)) == x` exactly.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

pub type Image = Array2<f64>;
pub type FeatureMap = Array3<f64>;

/// Nearest-neighbor upsample to `(h, w)`. The source cell of output row `i`
/// is `floor(i * src_h / h)`; exact replication when the source divides the
/// destination.
pub fn upsample_nn(src: &FeatureMap, h: usize, w: usize) -> FeatureMap {
    let (d, sh, sw) = src.dim();
    let mut out = Array3::zeros((d, h, w));
    for c in 0..d {
        for i in 0..h {
            let si = i * sh / h;
            for j in 0..w {
                out[(c, i, j)] = src[(c, si, j * sw / w)];
            }
        }
    }
    out
}

fn box_down_2d(src: ArrayView2<'_, f64>, h: usize, w: usize) -> Array2<f64> {
    let (sh, sw) = src.dim();
    let mut out = Array2::zeros((h, w));
    for i in 0..h {
        let r0 = i * sh / h;
        let r1 = ((i + 1) * sh / h).max(r0 + 1);
        for j in 0..w {
            let c0 = j * sw / w;
            let c1 = ((j + 1) * sw / w).max(c0 + 1);
            let mut sum = 0.0;
            for r in r0..r1 {
                for c in c0..c1 {
                    sum += src[(r, c)];
                }
            }
            out[(i, j)] = sum / ((r1 - r0) * (c1 - c0)) as f64;
        }
    }
    out
}

/// Box-average downsample of every channel to `(h, w)`.
pub fn downsample_box(src: &FeatureMap, h: usize, w: usize) -> FeatureMap {
    let (d, _, _) = src.dim();
    let mut out = Array3::zeros((d, h, w));
    for c in 0..d {
        out.index_axis_mut(Axis(0), c)
            .assign(&box_down_2d(src.index_axis(Axis(0), c), h, w));
    }
    out
}

/// Box-average downsample of a single image to `(h, w)`.
pub fn downsample_box_image(src: &Image, h: usize, w: usize) -> Image {
    box_down_2d(src.view(), h, w)
}

/// Replicate every pixel into a `factor x factor` block.
pub fn replicate_pixels(img: &Image, factor: usize) -> Image {
    if factor == 1 {
        return img.clone();
    }
    let (h, w) = img.dim();
    let mut out = Array2::zeros((h * factor, w * factor));
    for i in 0..h * factor {
        for j in 0..w * factor {
            out[(i, j)] = img[(i / factor, j / factor)];
        }
    }
    out
}

/// Sum of residuals, each nearest-neighbor upsampled to `(h, w)`, in
/// ascending scale order. The fixed order makes incremental accumulation
/// reproduce this exactly, bit for bit.
pub fn sum_upsampled(residuals: &[FeatureMap], d: usize, h: usize, w: usize) -> FeatureMap {
    let mut acc = Array3::zeros((d, h, w));
    for r in residuals {
        acc += &upsample_nn(r, h, w);
    }
    acc
}

/// Mean squared error between two same-shape images.
pub fn mse(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.dim(), b.dim(), "mse on mismatched shapes");
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let e = x - y;
        sum += e * e;
    }
    sum / a.len() as f64
}

/// Read a PGM image (text `P2` or binary `P5`), normalized by maxval into
/// `[0, 1]`. Binary files with maxval > 255 use two big-endian bytes per
/// pixel.
pub fn read_pgm(path: &std::path::Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    parse_pgm(&bytes).map_err(|e| Error::parse(format!("{}: {e}", path.display())))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0usize;
    let mut header = Vec::new();
    // Header tokens: magic, width, height, maxval. '#' starts a comment.
    while header.len() < 4 {
        match bytes.get(pos) {
            None => return Err("truncated header".into()),
            Some(b'#') => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            Some(c) if c.is_ascii_whitespace() => pos += 1,
            Some(_) => {
                let start = pos;
                while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
                    pos += 1;
                }
                header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
            }
        }
    }
    let magic = header[0];
    let w: usize = header[1].parse().map_err(|_| "bad width")?;
    let h: usize = header[2].parse().map_err(|_| "bad height")?;
    let maxval: u32 = header[3].parse().map_err(|_| "bad maxval")?;
    if w == 0 || h == 0 {
        return Err("empty image".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    let mut img = Array2::zeros((h, w));
    match magic {
        "P2" => {
            let body = std::str::from_utf8(&bytes[pos..]).map_err(|e| e.to_string())?;
            let mut vals = body.split_ascii_whitespace().filter(|t| !t.is_empty());
            for i in 0..h {
                for j in 0..w {
                    let t = vals.next().ok_or("truncated pixel data")?;
                    let v: u32 = t.parse().map_err(|_| format!("bad pixel {t:?}"))?;
                    if v > maxval {
                        return Err(format!("pixel {v} exceeds maxval {maxval}"));
                    }
                    img[(i, j)] = v as f64 / maxval as f64;
                }
            }
        }
        "P5" => {
            // Exactly one whitespace byte separates maxval from pixel data.
            pos += 1;
            let wide = maxval > 255;
            let need = h * w * if wide { 2 } else { 1 };
            let data = bytes
                .get(pos..pos + need)
                .ok_or_else(|| "truncated pixel data".to_string())?;
            for i in 0..h {
                for j in 0..w {
                    let idx = i * w + j;
                    let v = if wide {
                        u32::from(data[2 * idx]) << 8 | u32::from(data[2 * idx + 1])
                    } else {
                        u32::from(data[idx])
                    };
                    if v > maxval {
                        return Err(format!("pixel {v} exceeds maxval {maxval}"));
                    }
                    img[(i, j)] = v as f64 / maxval as f64;
                }
            }
        }
        other => return Err(format!("unsupported magic {other:?}")),
    }
    Ok(img)
}

/// Write an image as text PGM (`P2`), quantizing `[0, 1]` to `maxval` steps.
pub fn write_pgm(img: &Image, path: &std::path::Path, maxval: u16) -> Result<()> {
    if maxval == 0 {
        return Err(Error::arg("pgm maxval must be positive"));
    }
    let (h, w) = img.dim();
    let mut out = format!("P2\n{w} {h}\n{maxval}\n");
    for i in 0..h {
        let row: Vec<String> = (0..w)
            .map(|j| {
                let v = (img[(i, j)].clamp(0.0, 1.0) * f64::from(maxval)).round() as u32;
                v.to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
