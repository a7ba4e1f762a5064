//! Instance-ID masks as 16-bit single-channel PNGs. IDs are read
//! verbatim; 0 marks background.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::scene::{Camera, IdMask};

/// Loads one mask image and checks it against the paired camera's
/// dimensions.
pub fn load_id_mask(path: impl AsRef<Path>, camera: &Camera) -> Result<IdMask> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let buf = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "{}: expected 16-bit single-channel mask, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    if buf.width() != camera.width || buf.height() != camera.height {
        return Err(Error::Dimension(format!(
            "{}: mask is {}x{} but camera '{}' is {}x{}",
            path.display(),
            buf.width(),
            buf.height(),
            camera.name,
            camera.width,
            camera.height
        )));
    }
    IdMask::from_ids(buf.width(), buf.height(), buf.into_raw())
}

/// Loads the masks for every camera from `dir`, in camera order. Mask
/// filenames come from each camera record.
pub fn load_id_masks(dir: impl AsRef<Path>, cameras: &[Camera]) -> Result<Vec<IdMask>> {
    let dir = dir.as_ref();
    let mut masks = Vec::with_capacity(cameras.len());
    for cam in cameras {
        let file = cam.mask_file.as_ref().ok_or_else(|| {
            Error::Config(format!("camera '{}' has no mask filename", cam.name))
        })?;
        let path = dir.join(file);
        if !path.exists() {
            return Err(Error::Config(format!(
                "missing mask for view '{}': {}",
                cam.name,
                path.display()
            )));
        }
        masks.push(load_id_mask(&path, cam)?);
    }
    Ok(masks)
}

/// Writes a mask as a 16-bit grayscale PNG.
pub fn save_id_mask(mask: &IdMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(mask.width, mask.height, mask.ids.clone())
            .expect("mask buffer sized to dimensions");
    buf.save(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use tempfile::tempdir;

    fn camera(name: &str, w: u32, h: u32, mask: Option<&str>) -> Camera {
        Camera::new(
            name,
            100.0,
            100.0,
            w as f64 / 2.0,
            h as f64 / 2.0,
            w,
            h,
            Matrix4::identity(),
            mask.map(String::from),
        )
        .unwrap()
    }

    #[test]
    fn all_zero_mask() {
        let dir = tempdir().unwrap();
        let cam = camera("z", 8, 6, None);
        let p = dir.path().join("z.png");
        save_id_mask(&IdMask::new(8, 6), &p).unwrap();
        let mask = load_id_mask(&p, &cam).unwrap();
        assert!(mask.ids.iter().all(|&v| v == 0));
        assert!(mask.object_ids().is_empty());
    }

    #[test]
    fn constant_id_seven() {
        let dir = tempdir().unwrap();
        let cam = camera("c", 4, 4, None);
        let p = dir.path().join("c.png");
        let mask = IdMask::from_ids(4, 4, vec![7; 16]).unwrap();
        save_id_mask(&mask, &p).unwrap();
        let loaded = load_id_mask(&p, &cam).unwrap();
        assert!(loaded.ids.iter().all(|&v| v == 7));
    }

    #[test]
    fn three_views_in_camera_order() {
        let dir = tempdir().unwrap();
        let mut cams = Vec::new();
        for i in 0..3u16 {
            let name = format!("v{i}");
            let file = format!("v{i}.png");
            let mut m = IdMask::new(4, 4);
            m.set(0, 0, i + 1);
            save_id_mask(&m, dir.path().join(&file)).unwrap();
            cams.push(camera(&name, 4, 4, Some(&file)));
        }
        let masks = load_id_masks(dir.path(), &cams).unwrap();
        assert_eq!(masks.len(), 3);
        for (i, m) in masks.iter().enumerate() {
            assert_eq!(m.get(0, 0), i as u16 + 1);
        }
    }

    #[test]
    fn missing_mask_names_view() {
        let dir = tempdir().unwrap();
        let cams = vec![camera("lonely", 4, 4, Some("absent.png"))];
        let err = load_id_masks(dir.path(), &cams).unwrap_err();
        assert!(err.to_string().contains("lonely"), "got: {err}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.png");
        save_id_mask(&IdMask::new(8, 8), &p).unwrap();
        let cam = camera("small", 4, 4, None);
        let err = load_id_mask(&p, &cam).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn eight_bit_mask_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("8bit.png");
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::new(4, 4);
        buf.save(&p).unwrap();
        let cam = camera("c", 4, 4, None);
        let err = load_id_mask(&p, &cam).unwrap_err();
        assert!(err.to_string().contains("16-bit"), "got: {err}");
    }
}
