//! Mask handling, annulus fitting, glint detection, and segmentation scoring.
//!
//! Masks label every pixel with one of four classes (skin, sclera, iris,
//! pupil). The annulus fit turns a mask into pupil/iris circles for the
//! rubber-sheet model; glints are found by thresholding inside the iris
//! region; `degrade_proxy_segment` is the intensity-driven segmenter whose
//! accuracy tracks image fidelity.

use std::path::Path;

use crate::imagecore::{convolve2d, gaussian_kernel, BinaryMask, EyeImage};
use crate::{linalg, Error, Result};

/// Default intensity threshold for glint detection.
pub const GLINT_THRESHOLD: f64 = 0.9;

/// Semantic classes of an eye segmentation, with their on-disk label values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EyeClass {
    Skin = 0,
    Sclera = 1,
    Iris = 2,
    Pupil = 3,
}

impl EyeClass {
    pub const ALL: [EyeClass; 4] = [
        EyeClass::Skin,
        EyeClass::Sclera,
        EyeClass::Iris,
        EyeClass::Pupil,
    ];

    pub fn from_label(v: u8) -> Option<EyeClass> {
        match v {
            0 => Some(EyeClass::Skin),
            1 => Some(EyeClass::Sclera),
            2 => Some(EyeClass::Iris),
            3 => Some(EyeClass::Pupil),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EyeClass::Skin => "skin",
            EyeClass::Sclera => "sclera",
            EyeClass::Iris => "iris",
            EyeClass::Pupil => "pupil",
        }
    }
}

/// Per-pixel class labels; exactly one class per pixel, dimensions matching
/// the paired image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<SegmentationMask> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "mask labels length {} does not match {}x{}",
                labels.len(),
                width,
                height
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&v| v > 3) {
            return Err(Error::InvalidParameter(format!(
                "mask label {bad} outside 0..=3"
            )));
        }
        Ok(SegmentationMask {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, class: EyeClass) -> SegmentationMask {
        SegmentationMask {
            width,
            height,
            labels: vec![class as u8; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn class_at(&self, x: usize, y: usize) -> EyeClass {
        EyeClass::from_label(self.labels[y * self.width + x]).expect("validated on construction")
    }

    #[inline]
    pub fn set_class(&mut self, x: usize, y: usize, class: EyeClass) {
        self.labels[y * self.width + x] = class as u8;
    }

    pub fn count(&self, class: EyeClass) -> usize {
        let v = class as u8;
        self.labels.iter().filter(|&&l| l == v).count()
    }

    /// Binary mask of pixels whose class is in `classes`.
    pub fn class_mask(&self, classes: &[EyeClass]) -> BinaryMask {
        let mut out = BinaryMask::new(self.width, self.height);
        for (i, &l) in self.labels.iter().enumerate() {
            if classes.iter().any(|&c| c as u8 == l) {
                out.data[i] = true;
            }
        }
        out
    }

    /// Tight bounding box `(x0, y0, w, h)` of pixels in `classes`, or None
    /// when no pixel matches.
    pub fn class_bbox(&self, classes: &[EyeClass]) -> Option<(usize, usize, usize, usize)> {
        let mut x0 = usize::MAX;
        let mut y0 = usize::MAX;
        let mut x1 = 0usize;
        let mut y1 = 0usize;
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                let l = self.labels[y * self.width + x];
                if classes.iter().any(|&c| c as u8 == l) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Writes labels as an 8-bit grayscale PNG with raw values {0,1,2,3}.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.labels.clone())
                .expect("dimensions match buffer");
        img.save(path)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<SegmentationMask> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        SegmentationMask::new(w, h, img.into_raw())
    }
}

/// Pupil and iris boundary circles, subpixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrisAnnulus {
    pub pupil_center: (f64, f64),
    pub pupil_radius: f64,
    pub iris_center: (f64, f64),
    pub iris_radius: f64,
}

impl IrisAnnulus {
    /// Validates radii ordering and containment (pupil circle inside the
    /// iris circle with 1 px tolerance).
    pub fn new(
        pupil_center: (f64, f64),
        pupil_radius: f64,
        iris_center: (f64, f64),
        iris_radius: f64,
    ) -> Result<IrisAnnulus> {
        if !(pupil_radius > 0.0) || !(iris_radius > 0.0) {
            return Err(Error::InvalidParameter(
                "annulus radii must be positive".into(),
            ));
        }
        if pupil_radius >= iris_radius {
            return Err(Error::InvalidParameter(format!(
                "pupil radius {pupil_radius} not smaller than iris radius {iris_radius}"
            )));
        }
        let dx = pupil_center.0 - iris_center.0;
        let dy = pupil_center.1 - iris_center.1;
        let dist = (dx * dx + dy * dy).sqrt();
        if dist + pupil_radius > iris_radius + 1.0 {
            return Err(Error::InvalidParameter(format!(
                "pupil circle escapes iris circle by {:.2} px",
                dist + pupil_radius - iris_radius
            )));
        }
        Ok(IrisAnnulus {
            pupil_center,
            pupil_radius,
            iris_center,
            iris_radius,
        })
    }

    /// Point on the pupil boundary at angle `theta`.
    #[inline]
    pub fn pupil_point(&self, theta: f64) -> (f64, f64) {
        (
            self.pupil_center.0 + self.pupil_radius * theta.cos(),
            self.pupil_center.1 + self.pupil_radius * theta.sin(),
        )
    }

    /// Point on the iris boundary at angle `theta`.
    #[inline]
    pub fn iris_point(&self, theta: f64) -> (f64, f64) {
        (
            self.iris_center.0 + self.iris_radius * theta.cos(),
            self.iris_center.1 + self.iris_radius * theta.sin(),
        )
    }

    /// Point at normalized radius `t` (0 = pupil boundary, 1 = iris
    /// boundary) along the boundary-interpolation segment at angle `theta`.
    pub fn point_at(&self, t: f64, theta: f64) -> (f64, f64) {
        let (px, py) = self.pupil_point(theta);
        let (ix, iy) = self.iris_point(theta);
        ((1.0 - t) * px + t * ix, (1.0 - t) * py + t * iy)
    }
}

/// One thresholded glint component.
#[derive(Debug, Clone, PartialEq)]
pub struct GlintBlob {
    pub centroid: (f64, f64),
    pub area: usize,
}

/// Result of glint detection: binary raster plus per-blob summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct GlintMask {
    pub mask: BinaryMask,
    pub blobs: Vec<GlintBlob>,
}

/// Boundary pixels of `set`: set pixels with a 4-neighbor outside the set
/// (the image border counts as outside).
fn boundary_pixels(set: &BinaryMask) -> Vec<(f64, f64)> {
    let (w, h) = (set.width as isize, set.height as isize);
    let mut out = Vec::new();
    for y in 0..set.height {
        for x in 0..set.width {
            if !set.get(x, y) {
                continue;
            }
            let mut edge = false;
            for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= w || ny >= h || !set.get(nx as usize, ny as usize) {
                    edge = true;
                    break;
                }
            }
            if edge {
                out.push((x as f64, y as f64));
            }
        }
    }
    out
}

/// Inside-boundary pixels sit about half a pixel short of the true circle;
/// the fitted radius is pushed back out by this amount.
const RADIUS_DEBIAS: f64 = 0.5;

/// Least-squares circle through `points`: algebraic (Kasa) fit followed by
/// one Gauss-Newton step on the geometric residuals.
fn circle_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    // Kasa: minimize sum (x^2 + y^2 + D x + E y + F)^2, linear in (D, E, F).
    let rows: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y, 1.0]).collect();
    let rhs: Vec<f64> = points.iter().map(|&(x, y)| -(x * x + y * y)).collect();
    let sol = linalg::lstsq(&rows, &rhs)?;
    let (d, e, f) = (sol[0], sol[1], sol[2]);
    let mut cx = -d / 2.0;
    let mut cy = -e / 2.0;
    let r2 = cx * cx + cy * cy - f;
    if r2 <= 0.0 {
        return None;
    }
    let mut r = r2.sqrt();

    // One Gauss-Newton step on residuals dist_i - r.
    let mut jt_j = [[0.0f64; 3]; 3];
    let mut jt_r = [0.0f64; 3];
    for &(x, y) in points {
        let dx = x - cx;
        let dy = y - cy;
        let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
        let row = [-dx / dist, -dy / dist, -1.0];
        let res = dist - r;
        for i in 0..3 {
            for j in 0..3 {
                jt_j[i][j] += row[i] * row[j];
            }
            jt_r[i] += row[i] * res;
        }
    }
    let a: Vec<Vec<f64>> = jt_j.iter().map(|r| r.to_vec()).collect();
    let b: Vec<f64> = jt_r.iter().map(|v| -v).collect();
    if let Some(step) = linalg::solve(a, b) {
        cx += step[0];
        cy += step[1];
        r += step[2];
    }
    (r > 0.0).then_some((cx, cy, r))
}

/// Fits pupil and iris circles to a mask.
///
/// The pupil circle is fit to the pupil-class boundary; the iris circle to
/// the outer boundary of the iris-union-pupil region. The pupil radius is
/// clamped if the fit would let the pupil circle escape the iris circle.
pub fn fit_annulus(mask: &SegmentationMask) -> Result<IrisAnnulus> {
    let n_pupil = mask.count(EyeClass::Pupil);
    let n_iris = mask.count(EyeClass::Iris);
    if n_pupil < 50 || n_iris < 200 {
        return Err(Error::SegmentationFailure(format!(
            "too few pixels for annulus fit: {n_pupil} pupil, {n_iris} iris"
        )));
    }
    let pupil_set = mask.class_mask(&[EyeClass::Pupil]);
    let eye_set = mask.class_mask(&[EyeClass::Iris, EyeClass::Pupil]);
    let pupil_pts = boundary_pixels(&pupil_set);
    let iris_pts = boundary_pixels(&eye_set);
    let (pcx, pcy, pr) = circle_fit(&pupil_pts)
        .ok_or_else(|| Error::SegmentationFailure("degenerate pupil boundary".into()))?;
    let (icx, icy, ir) = circle_fit(&iris_pts)
        .ok_or_else(|| Error::SegmentationFailure("degenerate iris boundary".into()))?;
    let pr = pr + RADIUS_DEBIAS;
    let ir = ir + RADIUS_DEBIAS;

    // Containment clamp: dist + pupil_radius <= iris_radius + 1.
    let dx = pcx - icx;
    let dy = pcy - icy;
    let dist = (dx * dx + dy * dy).sqrt();
    let max_pr = (ir + 1.0 - dist).min(ir - 0.1);
    let pr = pr.min(max_pr);
    if pr <= 0.0 {
        return Err(Error::SegmentationFailure(
            "pupil circle fit outside iris circle".into(),
        ));
    }
    IrisAnnulus::new((pcx, pcy), pr, (icx, icy), ir)
}

/// 4-connected components of a binary raster, each as a pixel list.
fn connected_components(set: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = (set.width, set.height);
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    for start_y in 0..h {
        for start_x in 0..w {
            let idx = start_y * w + start_x;
            if !set.data[idx] || seen[idx] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(start_x, start_y)];
            seen[idx] = true;
            while let Some((x, y)) = stack.pop() {
                comp.push((x, y));
                for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if set.data[nidx] && !seen[nidx] {
                        seen[nidx] = true;
                        stack.push((nx as usize, ny as usize));
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

/// Chebyshev dilation by `radius` pixels.
pub(crate) fn dilate(set: &BinaryMask, radius: usize) -> BinaryMask {
    let (w, h) = (set.width, set.height);
    let r = radius as isize;
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if !set.get(x, y) {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                        out.set(nx as usize, ny as usize, true);
                    }
                }
            }
        }
    }
    out
}

/// Finds glints: pixels with intensity >= `threshold` inside the
/// iris-union-pupil region dilated by 2 px, grouped 4-connected; components
/// smaller than 2 px are discarded.
pub fn detect_glints(
    image: &EyeImage,
    mask: &SegmentationMask,
    threshold: f64,
) -> Result<GlintMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "glint threshold must be in (0,1), got {threshold}"
        )));
    }
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::InvalidParameter(format!(
            "image {}x{} does not match mask {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    let region = dilate(&mask.class_mask(&[EyeClass::Iris, EyeClass::Pupil]), 2);
    let mut candidates = BinaryMask::new(image.width(), image.height());
    for y in 0..image.height() {
        for x in 0..image.width() {
            if region.get(x, y) && image.get(x, y) >= threshold {
                candidates.set(x, y, true);
            }
        }
    }
    let mut out = BinaryMask::new(image.width(), image.height());
    let mut blobs = Vec::new();
    for comp in connected_components(&candidates) {
        if comp.len() < 2 {
            continue;
        }
        let mut sx = 0.0;
        let mut sy = 0.0;
        for &(x, y) in &comp {
            out.set(x, y, true);
            sx += x as f64;
            sy += y as f64;
        }
        let n = comp.len() as f64;
        blobs.push(GlintBlob {
            centroid: (sx / n, sy / n),
            area: comp.len(),
        });
    }
    // Stable report order, left-to-right then top-to-bottom.
    blobs.sort_by(|a, b| {
        (a.centroid.0, a.centroid.1)
            .partial_cmp(&(b.centroid.0, b.centroid.1))
            .unwrap()
    });
    Ok(GlintMask { mask: out, blobs })
}

/// Rebuilds per-blob summaries from an already-thresholded glint raster
/// (e.g. one stored alongside a dataset sample).
pub fn glint_blobs(raster: &BinaryMask) -> GlintMask {
    let mut blobs = Vec::new();
    for comp in connected_components(raster) {
        let mut sx = 0.0;
        let mut sy = 0.0;
        for &(x, y) in &comp {
            sx += x as f64;
            sy += y as f64;
        }
        let n = comp.len() as f64;
        blobs.push(GlintBlob {
            centroid: (sx / n, sy / n),
            area: comp.len(),
        });
    }
    blobs.sort_by(|a, b| {
        (a.centroid.0, a.centroid.1)
            .partial_cmp(&(b.centroid.0, b.centroid.1))
            .unwrap()
    });
    GlintMask {
        mask: raster.clone(),
        blobs,
    }
}

/// Intersection-over-union of one class between two masks; 1.0 when the
/// class is empty in both.
pub fn iou(pred: &SegmentationMask, truth: &SegmentationMask, class: EyeClass) -> Result<f64> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::InvalidParameter(format!(
            "iou dimension mismatch: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let v = class as u8;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (a, b) in pred.labels().iter().zip(truth.labels()) {
        let pa = *a == v;
        let pb = *b == v;
        if pa && pb {
            inter += 1;
        }
        if pa || pb {
            union += 1;
        }
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Pupil-candidate intensity: pixels this dark (after mild smoothing) are
/// treated as pupil. Rendered pupils sit near 0.04, iris texture floors
/// near 0.2.
const PROXY_PUPIL_LEVEL: f64 = 0.15;
/// Sclera-candidate intensity: skin renders near 0.55, sclera near 0.82.
const PROXY_SCLERA_LEVEL: f64 = 0.66;
/// Sustained-brightness level that separates the iris-to-sclera edge from
/// glint and texture edges.
const PROXY_SUSTAIN_LEVEL: f64 = 0.62;

/// Segments an eye image from intensities alone: pupil = largest dark
/// component (holes filled), iris = disk found by radial dark-to-bright
/// edge voting, sclera = bright region outside the iris disk, rest = skin.
///
/// Accuracy deliberately depends on image fidelity; obfuscation that
/// destroys edges lowers its IoU.
pub fn degrade_proxy_segment(image: &EyeImage) -> Result<SegmentationMask> {
    let (w, h) = (image.width(), image.height());
    let smooth = convolve2d(image, &gaussian_kernel(1.0)?)?;
    let lo = smooth.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = smooth
        .data()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 0.15 {
        return Err(Error::SegmentationFailure(
            "image has no intensity structure".into(),
        ));
    }

    // Pupil: largest dark component.
    let mut dark = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if smooth.get(x, y) < PROXY_PUPIL_LEVEL {
                dark.set(x, y, true);
            }
        }
    }
    let comps = connected_components(&dark);
    let pupil_comp = comps
        .into_iter()
        .max_by_key(|c| c.len())
        .filter(|c| c.len() >= 30)
        .ok_or_else(|| Error::SegmentationFailure("no dark pupil blob".into()))?;

    let mut pupil_set = BinaryMask::new(w, h);
    let mut sx = 0.0;
    let mut sy = 0.0;
    for &(x, y) in &pupil_comp {
        pupil_set.set(x, y, true);
        sx += x as f64;
        sy += y as f64;
    }
    let n = pupil_comp.len() as f64;
    let (cx, cy) = (sx / n, sy / n);
    fill_holes(&mut pupil_set);
    let pupil_radius_est = (pupil_set.count() as f64 / std::f64::consts::PI).sqrt();

    // Iris: radial dark-to-bright edge voting from the pupil centroid. The
    // sustain check rejects glint and texture edges, which go dark again
    // within a few pixels; the sclera stays bright.
    let n_rays = 64;
    let rho_min = (pupil_radius_est + 4.0).max(6.0);
    let rho_max = (pupil_radius_est + 60.0).min(0.5 * w.min(h) as f64 + 20.0);
    let mut radii = Vec::new();
    for k in 0..n_rays {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n_rays as f64;
        let (dx, dy) = (th.cos(), th.sin());
        // Outermost sustained dark-to-bright edge: iris texture can form
        // bright sustained bands mid-annulus, but the limbus is always the
        // last such edge before the sclera, so only the outermost run of
        // qualifying steps counts; its gradient peak centers the estimate
        // on the transition rather than the run's trailing edge.
        let mut run: Vec<(f64, f64)> = Vec::new();
        let mut best: Option<f64> = None;
        let mut rho = rho_min;
        while rho <= rho_max {
            let inner = smooth.sample_bilinear(cx + (rho - 2.0) * dx, cy + (rho - 2.0) * dy);
            let outer = smooth.sample_bilinear(cx + (rho + 2.0) * dx, cy + (rho + 2.0) * dy);
            let grad = outer - inner;
            let mut ok = false;
            if grad >= 0.08 {
                let s1 = smooth.sample_bilinear(cx + (rho + 5.0) * dx, cy + (rho + 5.0) * dy);
                let s2 = smooth.sample_bilinear(cx + (rho + 8.0) * dx, cy + (rho + 8.0) * dy);
                ok = s1 >= PROXY_SUSTAIN_LEVEL && s2 >= PROXY_SUSTAIN_LEVEL;
            }
            if ok {
                if run.last().is_some_and(|&(r, _)| rho - r > 1.5) {
                    run.clear(); // a more outward run supersedes inner ones
                }
                run.push((rho, grad));
                let peak = run
                    .iter()
                    .cloned()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
                best = peak.map(|(r, _)| r);
            }
            rho += 1.0;
        }
        if let Some(r) = best {
            radii.push(r);
        }
    }
    if radii.len() < 16 {
        return Err(Error::SegmentationFailure(format!(
            "iris edge found on only {} of {} rays",
            radii.len(),
            n_rays
        )));
    }
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = radii[radii.len() / 2];
    // Trim outlier rays (glint hits, texture ridges) and re-take the median.
    let kept: Vec<f64> = radii
        .iter()
        .cloned()
        .filter(|r| *r > 0.6 * median && *r < 1.5 * median)
        .collect();
    let iris_radius = kept[kept.len() / 2];

    let mut labels = vec![EyeClass::Skin as u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let ddx = x as f64 - cx;
            let ddy = y as f64 - cy;
            let dist = (ddx * ddx + ddy * ddy).sqrt();
            if pupil_set.get(x, y) {
                labels[idx] = EyeClass::Pupil as u8;
            } else if dist <= iris_radius {
                labels[idx] = EyeClass::Iris as u8;
            } else if smooth.get(x, y) >= PROXY_SCLERA_LEVEL {
                labels[idx] = EyeClass::Sclera as u8;
            }
        }
    }
    SegmentationMask::new(w, h, labels)
}

/// Fills enclosed holes: complement pixels unreachable from the border are
/// absorbed into the set.
fn fill_holes(set: &mut BinaryMask) {
    let (w, h) = (set.width, set.height);
    let mut outside = vec![false; w * h];
    let mut stack = Vec::new();
    for x in 0..w {
        for y in [0, h - 1] {
            if !set.get(x, y) && !outside[y * w + x] {
                outside[y * w + x] = true;
                stack.push((x, y));
            }
        }
    }
    for y in 0..h {
        for x in [0, w - 1] {
            if !set.get(x, y) && !outside[y * w + x] {
                outside[y * w + x] = true;
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let nidx = ny as usize * w + nx as usize;
            if !set.data[nidx] && !outside[nidx] {
                outside[nidx] = true;
                stack.push((nx as usize, ny as usize));
            }
        }
    }
    for i in 0..w * h {
        if !outside[i] {
            set.data[i] = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::EyeImage;

    /// Annulus mask rendered with the disk convention d^2 <= r^2.
    fn annulus_mask(
        w: usize,
        h: usize,
        center: (f64, f64),
        pupil_r: f64,
        iris_r: f64,
    ) -> SegmentationMask {
        let mut m = SegmentationMask::filled(w, h, EyeClass::Skin);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - center.0;
                let dy = y as f64 - center.1;
                let d2 = dx * dx + dy * dy;
                if d2 <= pupil_r * pupil_r {
                    m.set_class(x, y, EyeClass::Pupil);
                } else if d2 <= iris_r * iris_r {
                    m.set_class(x, y, EyeClass::Iris);
                }
            }
        }
        m
    }

    #[test]
    fn fit_annulus_recovers_perfect_disks() {
        let m = annulus_mask(200, 200, (100.0, 100.0), 20.0, 45.0);
        let a = fit_annulus(&m).unwrap();
        assert!((a.pupil_center.0 - 100.0).abs() < 0.5, "{:?}", a);
        assert!((a.pupil_center.1 - 100.0).abs() < 0.5);
        assert!((a.pupil_radius - 20.0).abs() < 0.5, "r={}", a.pupil_radius);
        assert!((a.iris_center.0 - 100.0).abs() < 0.5);
        assert!((a.iris_center.1 - 100.0).abs() < 0.5);
        assert!((a.iris_radius - 45.0).abs() < 0.5, "r={}", a.iris_radius);
    }

    #[test]
    fn fit_annulus_subpixel_center() {
        let m = annulus_mask(200, 200, (100.4, 99.7), 18.0, 44.0);
        let a = fit_annulus(&m).unwrap();
        assert!((a.pupil_center.0 - 100.4).abs() < 0.5);
        assert!((a.pupil_center.1 - 99.7).abs() < 0.5);
        assert!((a.pupil_radius - 18.0).abs() < 1.0);
        assert!((a.iris_radius - 44.0).abs() < 1.0);
    }

    #[test]
    fn fit_annulus_rejects_sparse_pupil() {
        // 10 pupil pixels only
        let mut m = annulus_mask(200, 200, (100.0, 100.0), 30.0, 60.0);
        let mut kept = 0;
        for y in 0..200 {
            for x in 0..200 {
                if m.class_at(x, y) == EyeClass::Pupil {
                    if kept < 10 {
                        kept += 1;
                    } else {
                        m.set_class(x, y, EyeClass::Iris);
                    }
                }
            }
        }
        assert!(matches!(
            fit_annulus(&m),
            Err(Error::SegmentationFailure(_))
        ));
    }

    #[test]
    fn annulus_invariants_enforced() {
        assert!(IrisAnnulus::new((0.0, 0.0), 10.0, (0.0, 0.0), 5.0).is_err());
        assert!(IrisAnnulus::new((20.0, 0.0), 10.0, (0.0, 0.0), 15.0).is_err());
        assert!(IrisAnnulus::new((1.0, 0.0), 10.0, (0.0, 0.0), 15.0).is_ok());
    }

    #[test]
    fn iou_identical_masks() {
        let m = annulus_mask(64, 64, (32.0, 32.0), 8.0, 20.0);
        for c in EyeClass::ALL {
            assert_eq!(iou(&m, &m, c).unwrap(), 1.0);
        }
    }

    #[test]
    fn iou_disjoint_sets() {
        let mut a = SegmentationMask::filled(10, 10, EyeClass::Skin);
        let mut b = SegmentationMask::filled(10, 10, EyeClass::Skin);
        a.set_class(0, 0, EyeClass::Pupil);
        b.set_class(5, 5, EyeClass::Pupil);
        assert_eq!(iou(&a, &b, EyeClass::Pupil).unwrap(), 0.0);
    }

    #[test]
    fn iou_partial_overlap_counts_pixels() {
        // two 10x10 squares overlapping in a 10x5 strip: 50 / 150 = 1/3
        let mut a = SegmentationMask::filled(20, 20, EyeClass::Skin);
        let mut b = SegmentationMask::filled(20, 20, EyeClass::Skin);
        for y in 0..10 {
            for x in 0..10 {
                a.set_class(x, y, EyeClass::Iris);
                b.set_class(x, y + 5, EyeClass::Iris);
            }
        }
        let v = iou(&a, &b, EyeClass::Iris).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn iou_empty_class_is_one() {
        let a = SegmentationMask::filled(4, 4, EyeClass::Skin);
        let b = SegmentationMask::filled(4, 4, EyeClass::Skin);
        assert_eq!(iou(&a, &b, EyeClass::Pupil).unwrap(), 1.0);
    }

    #[test]
    fn iou_symmetric() {
        let a = annulus_mask(64, 64, (30.0, 32.0), 8.0, 20.0);
        let b = annulus_mask(64, 64, (34.0, 32.0), 9.0, 21.0);
        for c in EyeClass::ALL {
            assert_eq!(
                iou(&a, &b, c).unwrap(),
                iou(&b, &a, c).unwrap()
            );
        }
    }

    #[test]
    fn iou_dimension_mismatch_rejected() {
        let a = SegmentationMask::filled(4, 4, EyeClass::Skin);
        let b = SegmentationMask::filled(5, 4, EyeClass::Skin);
        assert!(iou(&a, &b, EyeClass::Skin).is_err());
    }

    /// Glint blob: over-amplitude Gaussian clamped at `peak`, so a few
    /// pixels saturate (specular highlights clip in real captures).
    fn add_blob(img: &mut EyeImage, center: (f64, f64), peak: f64, sigma: f64) {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let dx = x as f64 - center.0;
                let dy = y as f64 - center.1;
                let v = (1.3 * peak * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp())
                    .min(peak);
                if v > img.get(x, y) {
                    img.set(x, y, v);
                }
            }
        }
    }

    #[test]
    fn detect_glints_empty_when_nothing_bright() {
        let img = EyeImage::filled(64, 64, 0.5);
        let m = annulus_mask(64, 64, (32.0, 32.0), 8.0, 20.0);
        let g = detect_glints(&img, &m, 0.9).unwrap();
        assert!(g.blobs.is_empty());
        assert_eq!(g.mask.count(), 0);
    }

    #[test]
    fn detect_glints_finds_two_blobs() {
        let mut img = EyeImage::filled(64, 64, 0.3);
        let m = annulus_mask(64, 64, (32.0, 32.0), 8.0, 24.0);
        add_blob(&mut img, (24.0, 30.0), 0.98, 1.8);
        add_blob(&mut img, (40.0, 36.0), 0.97, 1.5);
        let g = detect_glints(&img, &m, 0.9).unwrap();
        assert_eq!(g.blobs.len(), 2, "{:?}", g.blobs);
        assert!((g.blobs[0].centroid.0 - 24.0).abs() < 1.0);
        assert!((g.blobs[0].centroid.1 - 30.0).abs() < 1.0);
        assert!((g.blobs[1].centroid.0 - 40.0).abs() < 1.0);
        assert!((g.blobs[1].centroid.1 - 36.0).abs() < 1.0);
    }

    #[test]
    fn detect_glints_threshold_dominates_peak() {
        let mut img = EyeImage::filled(64, 64, 0.3);
        let m = annulus_mask(64, 64, (32.0, 32.0), 8.0, 24.0);
        add_blob(&mut img, (28.0, 32.0), 0.95, 2.0);
        let g = detect_glints(&img, &m, 0.99).unwrap();
        assert!(g.blobs.is_empty());
    }

    #[test]
    fn detect_glints_ignores_bright_pixels_outside_eye() {
        let mut img = EyeImage::filled(64, 64, 0.3);
        let m = annulus_mask(64, 64, (32.0, 32.0), 8.0, 20.0);
        add_blob(&mut img, (5.0, 5.0), 0.99, 2.0); // far outside the annulus
        let g = detect_glints(&img, &m, 0.9).unwrap();
        assert!(g.blobs.is_empty());
    }

    #[test]
    fn detect_glints_discards_single_pixel_blobs() {
        let mut img = EyeImage::filled(64, 64, 0.3);
        let m = annulus_mask(64, 64, (32.0, 32.0), 8.0, 24.0);
        img.set(30, 32, 0.95); // lone pixel, area 1
        let g = detect_glints(&img, &m, 0.9).unwrap();
        assert!(g.blobs.is_empty());
    }

    #[test]
    fn detect_glints_monotone_in_threshold() {
        let mut img = EyeImage::filled(64, 64, 0.3);
        let m = annulus_mask(64, 64, (32.0, 32.0), 8.0, 24.0);
        add_blob(&mut img, (24.0, 30.0), 0.99, 2.2);
        add_blob(&mut img, (40.0, 36.0), 0.93, 1.6);
        let lo = detect_glints(&img, &m, 0.85).unwrap();
        let hi = detect_glints(&img, &m, 0.95).unwrap();
        for i in 0..lo.mask.data.len() {
            if hi.mask.data[i] {
                assert!(lo.mask.data[i], "higher threshold produced new pixel");
            }
        }
        assert!(hi.mask.count() <= lo.mask.count());
    }

    #[test]
    fn detect_glints_rejects_bad_threshold() {
        let img = EyeImage::filled(8, 8, 0.5);
        let m = SegmentationMask::filled(8, 8, EyeClass::Iris);
        assert!(detect_glints(&img, &m, 0.0).is_err());
        assert!(detect_glints(&img, &m, 1.0).is_err());
    }

    #[test]
    fn proxy_rejects_constant_image() {
        let img = EyeImage::filled(128, 128, 0.5);
        assert!(matches!(
            degrade_proxy_segment(&img),
            Err(Error::SegmentationFailure(_))
        ));
    }

    #[test]
    fn proxy_segments_clean_synthetic_annulus() {
        // hand-built eye: dark pupil, mid iris, bright sclera ring, skin
        let (w, h) = (160, 160);
        let mut img = EyeImage::filled(w, h, 0.55);
        let truth = annulus_mask(w, h, (80.0, 80.0), 14.0, 40.0);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - 80.0;
                let dy = y as f64 - 80.0;
                let d = (dx * dx + dy * dy).sqrt();
                let v = if d <= 14.0 {
                    0.04
                } else if d <= 40.0 {
                    0.35 + 0.1 * ((x / 3 + y / 3) % 2) as f64
                } else if d <= 70.0 {
                    0.82
                } else {
                    0.55
                };
                img.set(x, y, v);
            }
        }
        let pred = degrade_proxy_segment(&img).unwrap();
        let pupil = iou(&pred, &truth, EyeClass::Pupil).unwrap();
        let iris = iou(&pred, &truth, EyeClass::Iris).unwrap();
        assert!(pupil >= 0.85, "pupil IoU {pupil}");
        assert!(iris >= 0.85, "iris IoU {iris}");
    }

    #[test]
    fn fill_holes_closes_enclosed_gap() {
        let mut set = BinaryMask::new(9, 9);
        for y in 2..7 {
            for x in 2..7 {
                set.set(x, y, true);
            }
        }
        set.set(4, 4, false); // enclosed hole
        fill_holes(&mut set);
        assert!(set.get(4, 4));
        assert!(!set.get(0, 0));
    }

    #[test]
    fn mask_png_round_trip() {
        let dir = std::env::temp_dir().join("irisbench_mask_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mask.png");
        let m = annulus_mask(32, 24, (16.0, 12.0), 4.0, 10.0);
        m.save_png(&path).unwrap();
        let back = SegmentationMask::load_png(&path).unwrap();
        assert_eq!(back, m);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn class_bbox_tight() {
        let mut m = SegmentationMask::filled(10, 10, EyeClass::Skin);
        m.set_class(2, 3, EyeClass::Iris);
        m.set_class(7, 5, EyeClass::Iris);
        assert_eq!(m.class_bbox(&[EyeClass::Iris]), Some((2, 3, 6, 3)));
        assert_eq!(m.class_bbox(&[EyeClass::Pupil]), None);
    }
}
