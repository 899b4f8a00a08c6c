//! Embeddings of intermediate images, PCA, clustering, diversity selection.
//!
//! At coarse scales candidates are kept for being structurally different,
//! not for scoring well: images are embedded, embeddings clustered with
//! K-Means++, and the member nearest each centroid survives.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{downsample_box_image, Image};

/// How an image becomes an embedding vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorTag {
    /// Per-patch features reduced by PCA to one scalar per patch; the
    /// embedding is the patch grid flattened (length h' * w').
    PatchPca,
    /// Mean of the per-patch features (length d').
    Pooled,
    /// Box-downsampled pixels (length h' * w'); the stand-in for a
    /// supervised structural extractor.
    RawDownsample,
}

impl std::fmt::Display for ExtractorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExtractorTag::PatchPca => "patch_pca",
            ExtractorTag::Pooled => "pooled",
            ExtractorTag::RawDownsample => "raw",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ExtractorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patch_pca" => Ok(ExtractorTag::PatchPca),
            "pooled" => Ok(ExtractorTag::Pooled),
            "raw" | "raw_downsample" => Ok(ExtractorTag::RawDownsample),
            other => Err(Error::parse(format!(
                "unknown extractor {other:?} (expected patch_pca|pooled|raw)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorVariant {
    pub tag: ExtractorTag,
    /// Patch grid (h', w'); must divide the image resolution.
    pub patch_grid: (usize, usize),
    /// Per-patch feature dimension d'. For patch features it must be a
    /// perfect square whose side divides the patch.
    pub embed_dim: usize,
}

impl Default for ExtractorVariant {
    fn default() -> Self {
        Self { tag: ExtractorTag::PatchPca, patch_grid: (8, 8), embed_dim: 4 }
    }
}

impl ExtractorVariant {
    pub fn validate_for(&self, image_h: usize, image_w: usize) -> Result<()> {
        let (gh, gw) = self.patch_grid;
        if gh == 0 || gw == 0 || self.embed_dim == 0 {
            return Err(Error::config("extractor grid and embed_dim must be positive"));
        }
        if image_h % gh != 0 || image_w % gw != 0 {
            return Err(Error::arg(format!(
                "patch grid {gh}x{gw} does not divide image {image_h}x{image_w}"
            )));
        }
        match self.tag {
            ExtractorTag::RawDownsample => Ok(()),
            _ => {
                let side = (self.embed_dim as f64).sqrt().round() as usize;
                if side * side != self.embed_dim {
                    return Err(Error::config(format!(
                        "embed_dim {} is not a perfect square",
                        self.embed_dim
                    )));
                }
                let (ph, pw) = (image_h / gh, image_w / gw);
                if ph % side != 0 || pw % side != 0 {
                    return Err(Error::arg(format!(
                        "sub-block side {side} does not divide patch {ph}x{pw}"
                    )));
                }
                if self.tag == ExtractorTag::PatchPca && gh * gw < 2 {
                    return Err(Error::config("patch PCA needs at least 2 patches"));
                }
                Ok(())
            }
        }
    }
}

/// One embedding row per candidate, plus the scale the images came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: Array2<f64>,
    pub source_scale: usize,
}

/// Per-patch features of one image: each patch contributes `d'` sub-block
/// box means, patches in row-major order.
fn patch_features(image: &Image, grid: (usize, usize), embed_dim: usize) -> Array2<f64> {
    let (gh, gw) = grid;
    let (ih, iw) = image.dim();
    let (ph, pw) = (ih / gh, iw / gw);
    let side = (embed_dim as f64).sqrt().round() as usize;
    let (sh, sw) = (ph / side, pw / side);
    let mut out = Array2::zeros((gh * gw, embed_dim));
    for pi in 0..gh {
        for pj in 0..gw {
            let patch = pi * gw + pj;
            for bi in 0..side {
                for bj in 0..side {
                    let mut sum = 0.0;
                    for r in 0..sh {
                        for c in 0..sw {
                            sum += image[(pi * ph + bi * sh + r, pj * pw + bj * sw + c)];
                        }
                    }
                    out[(patch, bi * side + bj)] = sum / (sh * sw) as f64;
                }
            }
        }
    }
    out
}

/// Embed candidate images. Rows follow input order exactly.
pub fn extract(images: &[Image], variant: &ExtractorVariant, source_scale: usize) -> Result<EmbeddingSet> {
    if images.is_empty() {
        return Err(Error::arg("no images to embed"));
    }
    let (ih, iw) = images[0].dim();
    if images.iter().any(|im| im.dim() != (ih, iw)) {
        return Err(Error::shape("images in one batch must share a shape"));
    }
    variant.validate_for(ih, iw)?;
    let (gh, gw) = variant.patch_grid;
    let dim = match variant.tag {
        ExtractorTag::PatchPca | ExtractorTag::RawDownsample => gh * gw,
        ExtractorTag::Pooled => variant.embed_dim,
    };
    let mut vectors = Array2::zeros((images.len(), dim));
    for (row, image) in images.iter().enumerate() {
        match variant.tag {
            ExtractorTag::PatchPca => {
                let feats = patch_features(image, variant.patch_grid, variant.embed_dim);
                let projected = pca_project(&feats, 1)?;
                for (col, v) in projected.column(0).iter().enumerate() {
                    vectors[(row, col)] = *v;
                }
            }
            ExtractorTag::Pooled => {
                let feats = patch_features(image, variant.patch_grid, variant.embed_dim);
                let n = feats.nrows() as f64;
                for col in 0..variant.embed_dim {
                    vectors[(row, col)] = feats.column(col).sum() / n;
                }
            }
            ExtractorTag::RawDownsample => {
                let down = downsample_box_image(image, gh, gw);
                for (col, v) in down.iter().enumerate() {
                    vectors[(row, col)] = *v;
                }
            }
        }
    }
    Ok(EmbeddingSet { vectors, source_scale })
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and matching eigenvectors as columns.
fn jacobi_eigh(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let m = a.nrows();
    let mut v = Array2::eye(m);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..m {
            for q in (p + 1)..m {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= 1e-30 {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..m {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;
                }
                for j in 0..m {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = c * apj - s * aqj;
                    a[(q, j)] = s * apj + c * aqj;
                }
                for i in 0..m {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Array2::zeros((m, m));
    for (new, &old) in order.iter().enumerate() {
        for i in 0..m {
            vectors[(i, new)] = v[(i, old)];
        }
    }
    (values, vectors)
}

/// Center columns and project onto the top-`components` principal axes.
///
/// Sign convention: each component's largest-magnitude entry is positive,
/// ties broken by lowest index, so results are stable across row
/// permutations of the input.
pub fn pca_project(data: &Array2<f64>, components: usize) -> Result<Array2<f64>> {
    let (n, m) = data.dim();
    if n < 2 {
        return Err(Error::arg("PCA needs at least 2 rows"));
    }
    if components < 1 || components > n.min(m) {
        return Err(Error::arg(format!(
            "components must lie in 1..={}, got {components}",
            n.min(m)
        )));
    }
    let mut centered = data.clone();
    for mut col in centered.columns_mut() {
        let mean = col.sum() / n as f64;
        col.mapv_inplace(|v| v - mean);
    }
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let (_, mut vectors) = jacobi_eigh(cov);
    for comp in 0..components {
        let col = vectors.column(comp);
        let mut lead = 0usize;
        let mut best = -1.0;
        for (i, &val) in col.iter().enumerate() {
            if val.abs() > best {
                best = val.abs();
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            for i in 0..m {
                vectors[(i, comp)] = -vectors[(i, comp)];
            }
        }
    }
    let basis = vectors.slice(ndarray::s![.., ..components]).to_owned();
    Ok(centered.dot(&basis))
}

const LLOYD_TOL: f64 = 1e-8;
const LLOYD_MAX_ITERS: usize = 100;
/// A single K-Means++ seeding only bounds the objective in expectation;
/// restarts (keep lowest WCSS) are what make small instances reliably land
/// near the optimum. 10 matches common library defaults.
const KMEANS_RESTARTS: usize = 10;

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Within-cluster sum of squares for an assignment against its centroids.
pub fn wcss(points: &Array2<f64>, assignments: &[usize], centroids: &Array2<f64>) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(points.row(i), centroids.row(a)))
        .sum()
}

fn kmeans_once(
    points: &Array2<f64>,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Array2<f64>) {
    let n = points.nrows();
    let m = points.ncols();
    // D^2 seeding: first center uniform, then proportional to squared
    // distance to the nearest chosen center. All-zero distances (duplicate
    // points) fall back to a uniform pick.
    let mut centroids = Array2::zeros((k, m));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut min_d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = min_d2.iter().sum();
        let pick = if total > 0.0 {
            WeightedIndex::new(&min_d2).map(|d| d.sample(rng)).unwrap_or_else(|_| rng.random_range(0..n))
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for i in 0..n {
            min_d2[i] = min_d2[i].min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    let assign = |centroids: &Array2<f64>| -> Vec<usize> {
        (0..n)
            .map(|i| {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for c in 0..k {
                    let d = sq_dist(points.row(i), centroids.row(c));
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect()
    };
    let mut assignments = assign(&centroids);
    for _ in 0..LLOYD_MAX_ITERS {
        let mut next = Array2::zeros((k, m));
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            let mut row = next.row_mut(a);
            row += &points.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mut row = next.row_mut(c);
                row.mapv_inplace(|v| v / counts[c] as f64);
            } else {
                // Empty cluster: reseed at the point farthest from its
                // assigned centroid.
                let far = (0..n)
                    .max_by(|&i, &j| {
                        let di = sq_dist(points.row(i), centroids.row(assignments[i]));
                        let dj = sq_dist(points.row(j), centroids.row(assignments[j]));
                        di.partial_cmp(&dj).unwrap()
                    })
                    .unwrap();
                next.row_mut(c).assign(&points.row(far));
            }
        }
        let shift = (0..k)
            .map(|c| sq_dist(centroids.row(c), next.row(c)).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        assignments = assign(&centroids);
        if shift < LLOYD_TOL {
            break;
        }
    }
    (assignments, centroids)
}

/// K-Means++ with Lloyd refinement, best of `KMEANS_RESTARTS` seedings by
/// WCSS. Deterministic given the rng stream.
pub fn kmeanspp_cluster(
    embeddings: &EmbeddingSet,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Array2<f64>)> {
    let n = embeddings.vectors.nrows();
    if k < 1 || k > n {
        return Err(Error::arg(format!("cluster count {k} outside 1..={n}")));
    }
    if embeddings.vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("embeddings must be finite"));
    }
    let mut best: Option<(f64, Vec<usize>, Array2<f64>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (assignments, centroids) = kmeans_once(&embeddings.vectors, k, rng);
        let objective = wcss(&embeddings.vectors, &assignments, &centroids);
        if best.as_ref().is_none_or(|(b, _, _)| objective < *b) {
            best = Some((objective, assignments, centroids));
        }
    }
    let (_, assignments, centroids) = best.unwrap();
    Ok((assignments, centroids))
}

/// Per cluster, the member nearest its centroid (ties by lowest candidate
/// index), in cluster order. If a cluster is empty, which only happens on
/// degenerate duplicate-point inputs, remaining slots are filled with the
/// lowest-index unselected candidates so the output length is always
/// `target` and indices are always distinct.
pub fn diversity_select(
    embeddings: &EmbeddingSet,
    assignments: &[usize],
    centroids: &Array2<f64>,
    target: usize,
) -> Result<Vec<usize>> {
    let n = embeddings.vectors.nrows();
    if assignments.len() != n {
        return Err(Error::arg("assignment length mismatch"));
    }
    if centroids.nrows() != target {
        return Err(Error::arg(format!(
            "{} clusters for target {target}",
            centroids.nrows()
        )));
    }
    let mut out = Vec::with_capacity(target);
    for c in 0..target {
        let mut pick: Option<(f64, usize)> = None;
        for i in 0..n {
            if assignments[i] != c {
                continue;
            }
            let d = sq_dist(embeddings.vectors.row(i), centroids.row(c));
            if pick.is_none_or(|(bd, _)| d < bd) {
                pick = Some((d, i));
            }
        }
        if let Some((_, i)) = pick {
            out.push(i);
        }
    }
    if out.len() < target {
        let mut used = vec![false; n];
        for &i in &out {
            used[i] = true;
        }
        for i in 0..n {
            if out.len() == target {
                break;
            }
            if !used[i] {
                used[i] = true;
                out.push(i);
            }
        }
    }
    if out.len() != target {
        return Err(Error::arg(format!(
            "cannot select {target} distinct members from {n} candidates"
        )));
    }
    Ok(out)
}
