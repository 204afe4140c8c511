use crate::bits::BitVector;
use crate::error::{Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }
}

/// Halves both sides by averaging each 2x2 block, rounding half up.
pub fn downscale_2x(img: &GrayImage) -> Result<GrayImage> {
    if !img.width.is_multiple_of(2) || !img.height.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "cannot halve a {}x{} image",
            img.width, img.height
        )));
    }
    let (w, h) = (img.width / 2, img.height / 2);
    let px = |x: usize, y: usize| img.pixels[y * img.width + x] as u32;
    let pixels = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let sum = px(2 * x, 2 * y) + px(2 * x + 1, 2 * y) + px(2 * x, 2 * y + 1) + px(2 * x + 1, 2 * y + 1);
            ((sum + 2) / 4) as u8
        })
        .collect();
    Ok(GrayImage {
        width: w,
        height: h,
        pixels,
    })
}

fn check_same_shape(imgs: &[GrayImage]) -> Result<(usize, usize)> {
    let first = imgs.first().ok_or_else(|| Error::invalid("no images to binarize"))?;
    if let Some(bad) = imgs.iter().find(|i| (i.width, i.height) != (first.width, first.height)) {
        return Err(Error::invalid(format!(
            "mixed image sizes: {}x{} and {}x{}",
            first.width, first.height, bad.width, bad.height
        )));
    }
    Ok((first.width, first.height))
}

/// Mean intensity of every pixel position across the images.
pub fn pixel_means(imgs: &[GrayImage]) -> Result<Vec<f64>> {
    let (w, h) = check_same_shape(imgs)?;
    let n = imgs.len() as f64;
    Ok(pixel_sums(imgs, w * h).into_iter().map(|s| s as f64 / n).collect())
}

fn pixel_sums(imgs: &[GrayImage], d: usize) -> Vec<u64> {
    let mut sums = vec![0u64; d];
    for img in imgs {
        for (s, &p) in sums.iter_mut().zip(&img.pixels) {
            *s += p as u64;
        }
    }
    sums
}

/// Thresholds each pixel at its mean over the collection; a bit is set iff the
/// pixel is strictly brighter than that mean.
pub fn binarize_per_pixel_mean(imgs: &[GrayImage]) -> Result<Vec<BitVector>> {
    let (w, h) = check_same_shape(imgs)?;
    let sums = pixel_sums(imgs, w * h);
    let n = imgs.len() as u64;
    // p > sum / n  <=>  p * n > sum, exact in integers
    Ok(imgs
        .iter()
        .map(|img| {
            let mut v = BitVector::zeros(w * h);
            for (i, (&p, &s)) in img.pixels.iter().zip(&sums).enumerate() {
                if p as u64 * n > s {
                    v.set(i, true);
                }
            }
            v
        })
        .collect())
}
