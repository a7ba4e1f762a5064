//! Segmentation quality metrics: per-object IoU and Boundary IoU.
//!
//! Boundary IoU restricts each mask to the band of pixels within
//! `boundary_radius` (Euclidean) of its boundary before intersecting;
//! image borders count as boundary. Bands come from an exact squared
//! Euclidean distance transform (two-pass lower-envelope method).

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scene::IdMask;

/// IoU and Boundary IoU of one object id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectScore {
    pub id: u16,
    pub iou: f64,
    pub biou: f64,
}

/// Conventional boundary band: 2% of the image diagonal, at least 1 px.
pub fn default_boundary_radius(width: u32, height: u32) -> u32 {
    let diag = ((width as f64).powi(2) + (height as f64).powi(2)).sqrt();
    (0.02 * diag).round().max(1.0) as u32
}

fn check_dims(pred: &IdMask, gt: &IdMask) -> Result<()> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    Ok(())
}

fn binary(mask: &IdMask, id: u16) -> Vec<bool> {
    mask.ids.iter().map(|&v| v == id).collect()
}

fn iou_of(a: &[bool], b: &[bool]) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b.iter()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

const FAR: f64 = 1e20;

/// 1D squared-distance lower envelope (Felzenszwalb & Huttenlocher).
fn dt1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -FAR;
    z[1] = FAR;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = FAR;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance from every mask pixel to the nearest
/// complement pixel, with out-of-image treated as complement (the mask is
/// processed inside a one-pixel background ring). Complement pixels get 0.
fn squared_distance_to_complement(mask: &[bool], width: usize, height: usize) -> Vec<f64> {
    let (pw, ph) = (width + 2, height + 2);
    let mut field = vec![0.0f64; pw * ph];
    for y in 0..height {
        for x in 0..width {
            if mask[y * width + x] {
                field[(y + 1) * pw + (x + 1)] = FAR;
            }
        }
    }
    // Rows, then columns.
    let mut tmp = vec![0.0f64; pw.max(ph)];
    for y in 0..ph {
        dt1d(&field[y * pw..(y + 1) * pw].to_vec(), &mut tmp[..pw]);
        field[y * pw..(y + 1) * pw].copy_from_slice(&tmp[..pw]);
    }
    let mut col = vec![0.0f64; ph];
    for x in 0..pw {
        for y in 0..ph {
            col[y] = field[y * pw + x];
        }
        dt1d(&col, &mut tmp[..ph]);
        for y in 0..ph {
            field[y * pw + x] = tmp[y];
        }
    }
    let mut out = vec![0.0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = field[(y + 1) * pw + (x + 1)];
        }
    }
    out
}

/// Boundary band of a binary mask: mask pixels within `radius` of the
/// complement (or of the image border).
fn boundary_band(mask: &[bool], width: usize, height: usize, radius: u32) -> Vec<bool> {
    let d2 = squared_distance_to_complement(mask, width, height);
    let r2 = (radius as f64) * (radius as f64);
    mask.iter()
        .zip(d2.iter())
        .map(|(&m, &d)| m && d <= r2)
        .collect()
}

fn object_ids_union(pred: &IdMask, gt: &IdMask) -> Vec<u16> {
    let mut ids: BTreeSet<u16> = gt.object_ids().into_iter().collect();
    ids.extend(pred.object_ids());
    ids.into_iter().collect()
}

/// Per-object IoU and Boundary IoU over the union of non-background ids.
pub fn mask_metrics(pred: &IdMask, gt: &IdMask, boundary_radius: u32) -> Result<Vec<ObjectScore>> {
    check_dims(pred, gt)?;
    let (w, h) = (pred.width as usize, pred.height as usize);
    let scores = object_ids_union(pred, gt)
        .into_iter()
        .map(|id| {
            let p = binary(pred, id);
            let g = binary(gt, id);
            let iou = iou_of(&p, &g);
            let biou = iou_of(
                &boundary_band(&p, w, h, boundary_radius),
                &boundary_band(&g, w, h, boundary_radius),
            );
            ObjectScore { id, iou, biou }
        })
        .collect();
    Ok(scores)
}

/// Mean IoU over objects; identical all-background masks score 1.
pub fn miou(pred: &IdMask, gt: &IdMask) -> Result<f64> {
    check_dims(pred, gt)?;
    let ids = object_ids_union(pred, gt);
    if ids.is_empty() {
        return Ok(1.0);
    }
    let sum: f64 = ids
        .iter()
        .map(|&id| iou_of(&binary(pred, id), &binary(gt, id)))
        .sum();
    Ok(sum / ids.len() as f64)
}

/// Mean Boundary IoU over objects at the given band radius (px).
pub fn mbiou(pred: &IdMask, gt: &IdMask, boundary_radius: u32) -> Result<f64> {
    let scores = mask_metrics(pred, gt, boundary_radius)?;
    if scores.is_empty() {
        return Ok(1.0);
    }
    Ok(scores.iter().map(|s| s.biou).sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> IdMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let ids = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c.to_digit(10).unwrap() as u16))
            .collect();
        IdMask::from_ids(w, h, ids).unwrap()
    }

    fn disk_mask(size: u32, cx: f64, cy: f64, r: f64) -> IdMask {
        let mut m = IdMask::new(size, size);
        for y in 0..size {
            for x in 0..size {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 <= r * r {
                    m.set(x, y, 1);
                }
            }
        }
        m
    }

    #[test]
    fn identical_masks_score_one() {
        let m = disk_mask(20, 9.5, 9.5, 6.0);
        assert_eq!(miou(&m, &m).unwrap(), 1.0);
        assert_eq!(mbiou(&m, &m, 2).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let a = mask_from(&["1100", "1100", "0000", "0000"]);
        let b = mask_from(&["0000", "0000", "0011", "0011"]);
        assert_eq!(miou(&a, &b).unwrap(), 0.0);
        assert_eq!(mbiou(&a, &b, 1).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap_is_half() {
        // P = [1,0], G = [1,1] -> |P∩G| / |P∪G| = 1/2.
        let p = mask_from(&["10"]);
        let g = mask_from(&["11"]);
        assert_eq!(miou(&p, &g).unwrap(), 0.5);
    }

    #[test]
    fn all_background_pair_scores_one() {
        let a = IdMask::new(6, 6);
        let b = IdMask::new(6, 6);
        assert_eq!(miou(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let a = IdMask::new(4, 4);
        let b = IdMask::new(5, 4);
        assert!(miou(&a, &b).is_err());
        assert!(mbiou(&a, &b, 1).is_err());
    }

    #[test]
    fn multi_object_average() {
        // Object 1 perfect, object 2 absent from prediction: mean of 1 and 0.
        let p = mask_from(&["1100", "1100", "0000", "0000"]);
        let g = mask_from(&["1100", "1100", "0022", "0022"]);
        assert_eq!(miou(&p, &g).unwrap(), 0.5);
    }

    /// Brute-force band: a mask pixel is boundary when any pixel within
    /// `radius` (Euclidean) is complement or out of image.
    fn brute_force_band(mask: &IdMask, id: u16, radius: i64) -> Vec<bool> {
        let (w, h) = (mask.width as i64, mask.height as i64);
        let mut band = vec![false; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                if mask.get(x as u32, y as u32) != id {
                    continue;
                }
                'scan: for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        if dx * dx + dy * dy > radius * radius {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        let outside = nx < 0 || ny < 0 || nx >= w || ny >= h;
                        if outside || mask.get(nx as u32, ny as u32) != id {
                            band[(y * w + x) as usize] = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        band
    }

    fn brute_force_biou(pred: &IdMask, gt: &IdMask, radius: i64) -> f64 {
        let bp = brute_force_band(pred, 1, radius);
        let bg = brute_force_band(gt, 1, radius);
        let inter = bp.iter().zip(&bg).filter(|(a, b)| **a && **b).count();
        let union = bp.iter().zip(&bg).filter(|(a, b)| **a || **b).count();
        inter as f64 / union as f64
    }

    #[test]
    fn dilated_disk_matches_brute_force_oracle() {
        // gt: disk of radius 6 on 20x20; pred: gt dilated by 1 px.
        let gt = disk_mask(20, 9.5, 9.5, 6.0);
        let mut pred = IdMask::new(20, 20);
        for y in 0..20i64 {
            for x in 0..20i64 {
                let near_gt = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(dx, dy)| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx >= 0
                            && ny >= 0
                            && nx < 20
                            && ny < 20
                            && gt.get(nx as u32, ny as u32) == 1
                    });
                if near_gt {
                    pred.set(x as u32, y as u32, 1);
                }
            }
        }
        for radius in [1u32, 2, 3] {
            let expect = brute_force_biou(&pred, &gt, radius as i64);
            let got = mbiou(&pred, &gt, radius).unwrap();
            assert!(
                (got - expect).abs() < 1e-12,
                "radius {radius}: got {got}, oracle {expect}"
            );
            assert!(got < 1.0, "dilated mask must not score a perfect boundary");
        }
        // Plain IoU is high even though boundary IoU is penalized.
        assert!(miou(&pred, &gt).unwrap() > mbiou(&pred, &gt, 1).unwrap());
    }

    #[test]
    fn bands_match_brute_force_on_random_masks() {
        let mut seed = 99u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..5 {
            let mut m = IdMask::new(17, 13);
            for y in 0..13 {
                for x in 0..17 {
                    if next() % 3 == 0 {
                        m.set(x, y, 1);
                    }
                }
            }
            let bin = binary(&m, 1);
            for radius in [1u32, 2, 4] {
                let fast = boundary_band(&bin, 17, 13, radius);
                let brute = brute_force_band(&m, 1, radius as i64);
                assert_eq!(fast, brute, "radius {radius}");
            }
        }
    }

    #[test]
    fn default_radius_is_two_percent_of_diagonal() {
        assert_eq!(default_boundary_radius(100, 100), 3); // 0.02·141.4 ≈ 2.83
        assert_eq!(default_boundary_radius(10, 10), 1); // floor at 1
    }
}
