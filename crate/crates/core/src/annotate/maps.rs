//! PNG encodings of the instance, class, depth and normal passes.

use std::collections::BTreeMap;
use std::path::Path;

use image::{ImageBuffer, Luma, RgbImage};

use crate::error::{IoContext, Result};
use crate::render::RenderPasses;

pub type Gray16 = ImageBuffer<Luma<u16>, Vec<u16>>;

pub fn instance_map(passes: &RenderPasses) -> Gray16 {
    let n = passes.resolution as u32;
    Gray16::from_fn(n, n, |x, y| Luma([passes.instance_ids[(y * n + x) as usize] as u16]))
}

/// Class id per pixel via `class_of` (instance id to class id); 0 elsewhere.
pub fn class_map(passes: &RenderPasses, class_of: &BTreeMap<u32, u32>) -> Gray16 {
    let n = passes.resolution as u32;
    Gray16::from_fn(n, n, |x, y| {
        let id = passes.instance_ids[(y * n + x) as usize];
        Luma([class_of.get(&id).copied().unwrap_or(0) as u16])
    })
}

/// Depth quantized to 16 bits; returns the image and the world units per level.
pub fn depth_map(passes: &RenderPasses) -> (Gray16, f64) {
    let n = passes.resolution as u32;
    let max = passes.depth.iter().copied().fold(0f32, f32::max) as f64;
    let scale = if max > 0.0 { max / 65535.0 } else { 1.0 };
    let img = Gray16::from_fn(n, n, |x, y| {
        let d = passes.depth[(y * n + x) as usize] as f64;
        Luma([(d / scale).round().min(65535.0) as u16])
    });
    (img, scale)
}

/// World normals mapped to `(n + 1) / 2`; black where nothing was hit.
pub fn normal_map(passes: &RenderPasses) -> RgbImage {
    let n = passes.resolution as u32;
    RgbImage::from_fn(n, n, |x, y| {
        let v = passes.normals[(y * n + x) as usize];
        if v == [0.0; 3] {
            return image::Rgb([0, 0, 0]);
        }
        image::Rgb(v.map(|c| ((c + 1.0) * 0.5 * 255.0).round().clamp(0.0, 255.0) as u8))
    })
}

#[derive(Debug, Clone)]
pub struct SegmentationMaps {
    pub instance: Gray16,
    pub class: Gray16,
}

pub fn export_segmentation_maps(passes: &RenderPasses, class_of: &BTreeMap<u32, u32>) -> SegmentationMaps {
    SegmentationMaps {
        instance: instance_map(passes),
        class: class_map(passes, class_of),
    }
}

pub fn write_png<P, C>(path: &Path, img: &ImageBuffer<P, C>) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png).at(path)
}
