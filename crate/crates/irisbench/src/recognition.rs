//! Identity recognition and the privacy metrics built on it.
//!
//! Two recognizers: c1 matches Gabor-phase iris codes by rotation-searched
//! Hamming distance; c2 matches style statistics (per-channel feature means
//! and stds of the iris patch) by nearest identity centroid after
//! per-dimension standardization. Acceptance thresholds for both are fit
//! once on the baseline enroll split at the equal-error-rate point and then
//! frozen, so false-acceptance rates stay comparable across methods.

use rayon::prelude::*;

use crate::imagecore::{BinaryMask, EyeImage, RngSeed};
use crate::obfuscation::{
    assign_donor, obfuscate, realize_method, style_features, unwrap, FeatureExtractor, MethodSpec,
    STRIP_ANGULAR, STRIP_RADIAL, STYLE_DIM,
};
use crate::segmentation::{
    degrade_proxy_segment, detect_glints, fit_annulus, EyeClass, GlintMask, IrisAnnulus,
    SegmentationMask, GLINT_THRESHOLD,
};
use crate::synthgen::Dataset;
use crate::{Error, Result};

/// Code grid: the polar strip block-averaged 4x2.
pub const CODE_ROWS: usize = STRIP_RADIAL / 4;
pub const CODE_COLS: usize = STRIP_ANGULAR / 2;
/// 1-D complex Gabor along each code row: wavelength in samples, envelope
/// sigma = half the wavelength, taps truncated at three sigma.
pub const GABOR_WAVELENGTH: f64 = 16.0;
pub const GABOR_SIGMA: f64 = 0.5 * GABOR_WAVELENGTH;
const GABOR_HALF_WIDTH: isize = 24;
/// Hamming matching searches column rotations in [-8, +8].
pub const ROTATION_SEARCH: i32 = 8;
const MIN_VALID_FRACTION: f64 = 0.5;
const MIN_JOINT_FRACTION: f64 = 0.25;
const RESPONSE_EPS: f64 = 1e-6;

/// Two-bit-per-cell Gabor phase code with a validity mask. Each row packs
/// its 128 columns into one u128 per bit plane.
#[derive(Debug, Clone, PartialEq)]
pub struct IrisCode {
    rows: usize,
    re: Vec<u128>,
    im: Vec<u128>,
    valid: Vec<u128>,
}

impl IrisCode {
    /// Fraction of cells marked valid.
    pub fn valid_fraction(&self) -> f64 {
        let v: u32 = self.valid.iter().map(|r| r.count_ones()).sum();
        v as f64 / (self.rows * CODE_COLS) as f64
    }

    #[cfg(test)]
    fn from_planes(re: Vec<u128>, im: Vec<u128>, valid: Vec<u128>) -> IrisCode {
        assert_eq!(re.len(), im.len());
        assert_eq!(re.len(), valid.len());
        IrisCode {
            rows: re.len(),
            re,
            im,
            valid,
        }
    }
}

struct GaborKernel {
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Complex Gabor taps with the real (cosine) part DC-corrected by an
/// envelope-weighted subtraction, so a constant signal yields exactly zero
/// response.
fn gabor_kernel() -> GaborKernel {
    let mut env = Vec::new();
    let mut re = Vec::new();
    let mut im = Vec::new();
    for t in -GABOR_HALF_WIDTH..=GABOR_HALF_WIDTH {
        let tf = t as f64;
        let e = (-tf * tf / (2.0 * GABOR_SIGMA * GABOR_SIGMA)).exp();
        let phase = 2.0 * std::f64::consts::PI * tf / GABOR_WAVELENGTH;
        env.push(e);
        re.push(e * phase.cos());
        im.push(e * phase.sin());
    }
    let re_sum: f64 = re.iter().sum();
    let env_sum: f64 = env.iter().sum();
    let k = re_sum / env_sum;
    for (r, e) in re.iter_mut().zip(&env) {
        *r -= k * e;
    }
    GaborKernel { re, im }
}

/// Encodes the iris texture: rubber-sheet unwrap on the given annulus,
/// 4x2 block averaging down to 16x128, then per-row circular Gabor
/// filtering; the two bits per cell are the signs of the real and
/// imaginary responses. Cells overlapping glint pixels or with response
/// magnitude below 1e-6 are invalid; a code under 50% valid is rejected.
pub fn iris_code(
    image: &EyeImage,
    annulus: &IrisAnnulus,
    glints: &BinaryMask,
) -> Result<IrisCode> {
    let strip = unwrap(image, annulus, STRIP_RADIAL, STRIP_ANGULAR)?;

    // Glint contamination of strip samples, judged at the sample points.
    let mut contaminated = vec![false; STRIP_RADIAL * STRIP_ANGULAR];
    for r in 0..STRIP_RADIAL {
        let t = r as f64 / (STRIP_RADIAL - 1) as f64;
        for c in 0..STRIP_ANGULAR {
            let theta = 2.0 * std::f64::consts::PI * c as f64 / STRIP_ANGULAR as f64;
            let (x, y) = annulus.point_at(t, theta);
            let xi = x.round() as isize;
            let yi = y.round() as isize;
            if xi >= 0
                && yi >= 0
                && (xi as usize) < glints.width
                && (yi as usize) < glints.height
                && glints.get(xi as usize, yi as usize)
            {
                contaminated[r * STRIP_ANGULAR + c] = true;
            }
        }
    }

    // 4x2 block averages and per-cell contamination.
    let mut sig = vec![0.0f64; CODE_ROWS * CODE_COLS];
    let mut cell_bad = vec![false; CODE_ROWS * CODE_COLS];
    for cr in 0..CODE_ROWS {
        for cc in 0..CODE_COLS {
            let mut acc = 0.0;
            let mut bad = false;
            for dr in 0..4 {
                for dc in 0..2 {
                    let r = cr * 4 + dr;
                    let c = cc * 2 + dc;
                    acc += strip.get(r, c);
                    bad |= contaminated[r * STRIP_ANGULAR + c];
                }
            }
            sig[cr * CODE_COLS + cc] = acc / 8.0;
            cell_bad[cr * CODE_COLS + cc] = bad;
        }
    }

    let kernel = gabor_kernel();
    let mut re_rows = vec![0u128; CODE_ROWS];
    let mut im_rows = vec![0u128; CODE_ROWS];
    let mut valid_rows = vec![0u128; CODE_ROWS];
    for cr in 0..CODE_ROWS {
        let row = &sig[cr * CODE_COLS..(cr + 1) * CODE_COLS];
        for cc in 0..CODE_COLS {
            let mut re = 0.0;
            let mut im = 0.0;
            for (k, t) in (-GABOR_HALF_WIDTH..=GABOR_HALF_WIDTH).enumerate() {
                let s = row[(cc as isize + t).rem_euclid(CODE_COLS as isize) as usize];
                re += s * kernel.re[k];
                im += s * kernel.im[k];
            }
            let bit = 1u128 << cc;
            if re >= 0.0 {
                re_rows[cr] |= bit;
            }
            if im >= 0.0 {
                im_rows[cr] |= bit;
            }
            if !cell_bad[cr * CODE_COLS + cc] && (re * re + im * im).sqrt() >= RESPONSE_EPS {
                valid_rows[cr] |= bit;
            }
        }
    }

    let code = IrisCode {
        rows: CODE_ROWS,
        re: re_rows,
        im: im_rows,
        valid: valid_rows,
    };
    if code.valid_fraction() < MIN_VALID_FRACTION {
        return Err(Error::InsufficientTexture(format!(
            "only {:.1}% of code cells valid",
            100.0 * code.valid_fraction()
        )));
    }
    Ok(code)
}

#[inline]
fn rotate_row(v: u128, shift: i32) -> u128 {
    match shift.cmp(&0) {
        std::cmp::Ordering::Greater => v.rotate_left(shift as u32),
        std::cmp::Ordering::Less => v.rotate_right((-shift) as u32),
        std::cmp::Ordering::Equal => v,
    }
}

/// Fractional Hamming distance: minimum over column rotations in
/// [-8, +8] of disagreeing bits over jointly valid bits; a rotation with
/// joint validity under 25% of cells scores 1.
pub fn hamming(a: &IrisCode, b: &IrisCode) -> Result<f64> {
    if a.rows != b.rows {
        return Err(Error::InvalidParameter(format!(
            "code shapes differ: {} vs {} rows",
            a.rows, b.rows
        )));
    }
    let total_cells = (a.rows * CODE_COLS) as f64;
    let mut best = f64::INFINITY;
    for shift in -ROTATION_SEARCH..=ROTATION_SEARCH {
        let mut joint_bits = 0u64;
        let mut disagree = 0u64;
        for r in 0..a.rows {
            let joint = a.valid[r] & rotate_row(b.valid[r], shift);
            joint_bits += joint.count_ones() as u64;
            disagree += ((a.re[r] ^ rotate_row(b.re[r], shift)) & joint).count_ones() as u64;
            disagree += ((a.im[r] ^ rotate_row(b.im[r], shift)) & joint).count_ones() as u64;
        }
        let hd = if (joint_bits as f64) < MIN_JOINT_FRACTION * total_cells {
            1.0
        } else {
            disagree as f64 / (2 * joint_bits) as f64
        };
        best = best.min(hd);
    }
    Ok(best)
}

/// Enrolled templates for one benchmark run. Built from enroll-split
/// samples only; immutable afterwards.
pub struct Gallery {
    /// (identity, code) per enroll sample.
    codes: Vec<(u32, IrisCode)>,
    /// Per-dimension standardization (mean, std) fit on enroll templates.
    std_mean: Vec<f64>,
    std_scale: Vec<f64>,
    /// (identity, standardized centroid), sorted by identity.
    centroids: Vec<(u32, Vec<f64>)>,
    /// (identity, standardized template) per enroll sample.
    std_templates: Vec<(u32, Vec<f64>)>,
}

/// Segmentation as the recognizer sees it: estimated from the image alone,
/// never read from published ground truth. Identification quality therefore
/// tracks image fidelity; obfuscation that destroys boundaries degrades the
/// geometry this returns and, through it, the codes.
pub fn segment_for_scoring(image: &EyeImage) -> Result<(SegmentationMask, GlintMask)> {
    let seg = degrade_proxy_segment(image)?;
    let glints = detect_glints(image, &seg, GLINT_THRESHOLD)?;
    Ok((seg, glints))
}

/// Iris patch of an image under a segmentation mask: crop to the bounding
/// box of iris-class pixels.
pub fn iris_crop(image: &EyeImage, mask: &SegmentationMask) -> Result<EyeImage> {
    let (x0, y0, w, h) = mask
        .class_bbox(&[EyeClass::Iris])
        .ok_or_else(|| Error::SegmentationFailure("mask has no iris pixels".into()))?;
    image.crop(x0, y0, w, h)
}

impl Gallery {
    /// Enrolls every enroll-split sample from its curated ground-truth
    /// segmentation. Enrollment is the supervised half of the protocol;
    /// probes are scored from image-estimated geometry only, so degraded
    /// probe images pay a geometry-mismatch cost against the gallery.
    pub fn enroll(dataset: &Dataset, extractor: &FeatureExtractor) -> Result<Gallery> {
        let entries: Vec<_> = dataset.enroll().collect();
        if entries.is_empty() {
            return Err(Error::InvalidState("enroll split is empty".into()));
        }
        let built: Vec<(u32, IrisCode, Vec<f64>)> = entries
            .par_iter()
            .map(|e| {
                let annulus = fit_annulus(&e.mask)?;
                let code = iris_code(&e.image, &annulus, &e.glints)?;
                let patch = iris_crop(&e.image, &e.mask)?;
                let template = style_features(extractor, &patch)?;
                Ok((e.identity_id, code, template))
            })
            .collect::<Result<_>>()?;

        let dim = STYLE_DIM;
        let n = built.len() as f64;
        let mut std_mean = vec![0.0; dim];
        for (_, _, t) in &built {
            for (m, v) in std_mean.iter_mut().zip(t) {
                *m += v / n;
            }
        }
        let mut std_scale = vec![0.0; dim];
        for (_, _, t) in &built {
            for i in 0..dim {
                let d = t[i] - std_mean[i];
                std_scale[i] += d * d / n;
            }
        }
        for s in &mut std_scale {
            *s = (*s).sqrt().max(1e-9);
        }

        let mut std_templates: Vec<(u32, Vec<f64>)> = built
            .iter()
            .map(|(id, _, t)| {
                (
                    *id,
                    t.iter()
                        .enumerate()
                        .map(|(i, v)| (v - std_mean[i]) / std_scale[i])
                        .collect(),
                )
            })
            .collect();
        std_templates.sort_by_key(|(id, _)| *id);

        let mut ids: Vec<u32> = std_templates.iter().map(|(id, _)| *id).collect();
        ids.dedup();
        let mut centroids = Vec::with_capacity(ids.len());
        for id in ids {
            let members: Vec<&Vec<f64>> = std_templates
                .iter()
                .filter(|(i, _)| *i == id)
                .map(|(_, t)| t)
                .collect();
            let k = members.len() as f64;
            let mut c = vec![0.0; dim];
            for m in members {
                for (ci, v) in c.iter_mut().zip(m) {
                    *ci += v / k;
                }
            }
            centroids.push((id, c));
        }

        let codes = built.into_iter().map(|(id, c, _)| (id, c)).collect();
        Ok(Gallery {
            codes,
            std_mean,
            std_scale,
            centroids,
            std_templates,
        })
    }

    pub fn identities(&self) -> Vec<u32> {
        self.centroids.iter().map(|(id, _)| *id).collect()
    }

    fn standardize(&self, template: &[f64]) -> Vec<f64> {
        template
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.std_mean[i]) / self.std_scale[i])
            .collect()
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Nearest enrolled code by Hamming distance. Ties break toward the lower
/// identity id (enrollment order), keeping identification deterministic.
pub fn identify_c1(probe: &IrisCode, gallery: &Gallery) -> Result<(u32, f64)> {
    if gallery.codes.is_empty() {
        return Err(Error::InvalidState("gallery has no enrolled codes".into()));
    }
    let mut best: Option<(u32, f64)> = None;
    for (id, code) in &gallery.codes {
        let d = hamming(probe, code)?;
        let better = match best {
            None => true,
            Some((bid, bd)) => d < bd || (d == bd && *id < bid),
        };
        if better {
            best = Some((*id, d));
        }
    }
    Ok(best.unwrap())
}

/// Nearest identity centroid in standardized style space.
pub fn identify_c2(template: &[f64], gallery: &Gallery) -> Result<(u32, f64)> {
    if gallery.centroids.is_empty() {
        return Err(Error::InvalidState("gallery has no centroids".into()));
    }
    if template.len() != STYLE_DIM {
        return Err(Error::InvalidParameter(format!(
            "template length {} != {STYLE_DIM}",
            template.len()
        )));
    }
    let probe = gallery.standardize(template);
    let mut best: Option<(u32, f64)> = None;
    for (id, c) in &gallery.centroids {
        let d = euclid(&probe, c);
        let better = match best {
            None => true,
            Some((bid, bd)) => d < bd || (d == bd && *id < bid),
        };
        if better {
            best = Some((*id, d));
        }
    }
    Ok(best.unwrap())
}

/// Frozen acceptance thresholds, one per recognizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub tau1: f64,
    pub tau2: f64,
}

/// Equal-error-rate threshold over genuine/impostor score sets (acceptance
/// means score < threshold). Ties resolve toward the smaller threshold.
fn eer_threshold(genuine: &mut [f64], impostor: &mut [f64]) -> Result<f64> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::InvalidState(
            "threshold fit needs both genuine and impostor scores".into(),
        ));
    }
    genuine.sort_by(|a, b| a.partial_cmp(b).unwrap());
    impostor.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut candidates: Vec<f64> = Vec::new();
    let mut all: Vec<f64> = genuine.iter().chain(impostor.iter()).cloned().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.dedup();
    candidates.push(all[0] - 1e-9);
    for w in all.windows(2) {
        candidates.push((w[0] + w[1]) / 2.0);
    }
    candidates.push(all[all.len() - 1] + 1e-9);

    let mut best = (f64::INFINITY, f64::INFINITY); // (|far - frr|, tau)
    for &tau in &candidates {
        let far = impostor.partition_point(|&d| d < tau) as f64 / impostor.len() as f64;
        let frr = 1.0 - genuine.partition_point(|&d| d < tau) as f64 / genuine.len() as f64;
        let gap = (far - frr).abs();
        if gap < best.0 - 1e-15 {
            best = (gap, tau);
        }
    }
    Ok(best.1)
}

/// Fits both thresholds on the enrolled baseline data and freezes them.
/// c1 scores are pairwise Hamming distances between enroll codes; c2
/// scores are distances from enroll templates to identity centroids.
pub fn fit_thresholds(gallery: &Gallery) -> Result<Thresholds> {
    let mut genuine1 = Vec::new();
    let mut impostor1 = Vec::new();
    for i in 0..gallery.codes.len() {
        for j in i + 1..gallery.codes.len() {
            let d = hamming(&gallery.codes[i].1, &gallery.codes[j].1)?;
            if gallery.codes[i].0 == gallery.codes[j].0 {
                genuine1.push(d);
            } else {
                impostor1.push(d);
            }
        }
    }
    let mut genuine2 = Vec::new();
    let mut impostor2 = Vec::new();
    for (id, t) in &gallery.std_templates {
        for (cid, c) in &gallery.centroids {
            let d = euclid(t, c);
            if id == cid {
                genuine2.push(d);
            } else {
                impostor2.push(d);
            }
        }
    }
    Ok(Thresholds {
        tau1: eer_threshold(&mut genuine1, &mut impostor1)?,
        tau2: eer_threshold(&mut genuine2, &mut impostor2)?,
    })
}

/// Gallery, frozen thresholds, and the shared feature extractor: everything
/// identification needs, enrolled once per run.
pub struct Recognizer {
    pub gallery: Gallery,
    pub thresholds: Thresholds,
    extractor: FeatureExtractor,
}

impl Recognizer {
    pub fn enroll(dataset: &Dataset, extractor_seed: RngSeed) -> Result<Recognizer> {
        let extractor = FeatureExtractor::new(extractor_seed);
        let gallery = Gallery::enroll(dataset, &extractor)?;
        let thresholds = fit_thresholds(&gallery)?;
        Ok(Recognizer {
            gallery,
            thresholds,
            extractor,
        })
    }

    /// c1 identification of a (possibly obfuscated) image under a
    /// segmentation estimated from that image (see `segment_for_scoring`).
    pub fn score_c1(
        &self,
        image: &EyeImage,
        mask: &SegmentationMask,
        glints: &BinaryMask,
    ) -> Result<(u32, f64)> {
        let annulus = fit_annulus(mask)?;
        let code = iris_code(image, &annulus, glints)?;
        identify_c1(&code, &self.gallery)
    }

    /// c2 identification from the image's iris patch.
    pub fn score_c2(&self, image: &EyeImage, mask: &SegmentationMask) -> Result<(u32, f64)> {
        let patch = iris_crop(image, mask)?;
        let template = style_features(&self.extractor, &patch)?;
        identify_c2(&template, &self.gallery)
    }
}

/// Per-probe identification outcome for one method row.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub victim: u32,
    pub donor: u32,
    /// (predicted identity, distance), per classifier; None = that
    /// classifier could not score the probe.
    pub c1: Option<(u32, f64)>,
    pub c2: Option<(u32, f64)>,
}

/// Scores one obfuscated probe image against the gallery.
pub fn score_probe(
    rec: &Recognizer,
    image: &EyeImage,
    mask: &SegmentationMask,
    glints: &BinaryMask,
    victim: u32,
    donor: u32,
) -> ProbeOutcome {
    ProbeOutcome {
        victim,
        donor,
        c1: rec.score_c1(image, mask, glints).ok(),
        c2: rec.score_c2(image, mask).ok(),
    }
}

/// Accuracy / false-acceptance summary over one method row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyMetrics {
    pub acc_c1: f64,
    pub acc_c2: f64,
    pub far_c1: f64,
    pub far_c2: f64,
    pub far_any_c1: f64,
    pub far_any_c2: f64,
    pub n_failed: usize,
    pub n_probes: usize,
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

/// Aggregates probe outcomes into row metrics. Accuracy is rank-1
/// identification of the victim; false acceptance requires the frozen
/// threshold and counts acceptance as the assigned donor (primary) or as
/// any non-victim identity (secondary).
pub fn summarize_outcomes(outcomes: &[Option<ProbeOutcome>], thresholds: Thresholds) -> PrivacyMetrics {
    let mut c1_total = 0;
    let mut c1_acc = 0;
    let mut c1_far = 0;
    let mut c1_any = 0;
    let mut c2_total = 0;
    let mut c2_acc = 0;
    let mut c2_far = 0;
    let mut c2_any = 0;
    let mut failed = 0;
    for o in outcomes {
        let Some(o) = o else {
            failed += 1;
            continue;
        };
        if o.c1.is_none() || o.c2.is_none() {
            failed += 1;
        }
        if let Some((id, d)) = o.c1 {
            c1_total += 1;
            if id == o.victim {
                c1_acc += 1;
            }
            if d < thresholds.tau1 && id != o.victim {
                c1_any += 1;
                if id == o.donor {
                    c1_far += 1;
                }
            }
        }
        if let Some((id, d)) = o.c2 {
            c2_total += 1;
            if id == o.victim {
                c2_acc += 1;
            }
            if d < thresholds.tau2 && id != o.victim {
                c2_any += 1;
                if id == o.donor {
                    c2_far += 1;
                }
            }
        }
    }
    PrivacyMetrics {
        acc_c1: rate(c1_acc, c1_total),
        acc_c2: rate(c2_acc, c2_total),
        far_c1: rate(c1_far, c1_total),
        far_c2: rate(c2_far, c2_total),
        far_any_c1: rate(c1_any, c1_total),
        far_any_c2: rate(c2_any, c2_total),
        n_failed: failed,
        n_probes: outcomes.len(),
    }
}

/// Obfuscates and scores every probe-split sample under one method grid
/// point. Donor assignment and noise seeds depend only on (run_seed, probe
/// index), so rows of one run see identical probes and donors.
pub fn evaluate_method(
    dataset: &Dataset,
    rec: &Recognizer,
    spec: &MethodSpec,
    run_seed: RngSeed,
    extractor_seed: RngSeed,
) -> Result<PrivacyMetrics> {
    let probes: Vec<_> = dataset.probe().collect();
    if probes.is_empty() {
        return Err(Error::InvalidState("probe split is empty".into()));
    }
    let outcomes: Vec<Option<ProbeOutcome>> = probes
        .par_iter()
        .enumerate()
        .map(|(idx, entry)| {
            let victim = entry.identity_id;
            let donor = assign_donor(dataset, victim, idx, run_seed).ok()?;
            let donor_id = donor.identity_id;
            let method = realize_method(spec, donor, idx, run_seed, extractor_seed);
            let image = match &method {
                Some(m) => obfuscate(entry, m).ok()?,
                None => entry.image.clone(),
            };
            Some(score_probe(
                rec,
                &image,
                &entry.mask,
                &entry.glints,
                victim,
                donor_id,
            ))
        })
        .collect();
    Ok(summarize_outcomes(&outcomes, rec.thresholds))
}

/// Recognition accuracy under one method (privacy evaluation).
pub fn evaluate_privacy(
    dataset: &Dataset,
    rec: &Recognizer,
    spec: &MethodSpec,
    run_seed: RngSeed,
    extractor_seed: RngSeed,
) -> Result<(f64, f64, usize)> {
    let m = evaluate_method(dataset, rec, spec, run_seed, extractor_seed)?;
    Ok((m.acc_c1, m.acc_c2, m.n_failed))
}

/// False-acceptance rates under one attack (impersonation evaluation).
pub fn evaluate_far(
    dataset: &Dataset,
    rec: &Recognizer,
    spec: &MethodSpec,
    run_seed: RngSeed,
    extractor_seed: RngSeed,
) -> Result<(f64, f64, usize)> {
    let m = evaluate_method(dataset, rec, spec, run_seed, extractor_seed)?;
    Ok((m.far_c1, m.far_c2, m.n_failed))
}
