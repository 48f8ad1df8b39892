/// Linear RGB raster with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: [f64; 3]) -> Self {
        Self { width, height, pixels: vec![fill; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f64; 3]) {
        self.pixels[y * self.width + x] = c;
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn from_rgb8(img: &::image::RgbImage) -> Self {
        Self::from_fn(img.width() as usize, img.height() as usize, |x, y| {
            let p = img.get_pixel(x as u32, y as u32).0;
            [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
        })
    }

    pub fn to_rgb8(&self) -> ::image::RgbImage {
        ::image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let c = self.get(x as usize, y as usize);
            ::image::Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }
}
