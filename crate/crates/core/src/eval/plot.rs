use image::{Rgb, RgbImage};

const WIDTH: u32 = 480;
const HEIGHT: u32 = 320;
const MARGIN: i64 = 40;

/// Accuracy-versus-count line plot. The y axis spans `[0, 1]`, the x axis
/// `[0, max count]`; gridlines mark every 0.1 of accuracy.
pub fn render_curve(points: &[(usize, f64)]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (w, h) = (WIDTH as i64, HEIGHT as i64);
    let (x0, y0, x1, y1) = (MARGIN, h - MARGIN, w - MARGIN, MARGIN);
    for i in 0..=10 {
        let y = y0 + (y1 - y0) * i / 10;
        line(&mut img, (x0, y), (x1, y), Rgb([225, 225, 225]));
    }
    line(&mut img, (x0, y0), (x1, y0), Rgb([0, 0, 0]));
    line(&mut img, (x0, y0), (x0, y1), Rgb([0, 0, 0]));

    let max_count = points.iter().map(|p| p.0).max().unwrap_or(0).max(1) as f64;
    let to_px = |&(c, acc): &(usize, f64)| {
        let x = x0 as f64 + (x1 - x0) as f64 * c as f64 / max_count;
        let y = y0 as f64 + (y1 - y0) as f64 * acc.clamp(0.0, 1.0);
        (x.round() as i64, y.round() as i64)
    };
    let pixels: Vec<(i64, i64)> = points.iter().map(to_px).collect();
    let blue = Rgb([30, 90, 200]);
    for pair in pixels.windows(2) {
        line(&mut img, pair[0], pair[1], blue);
    }
    for &(x, y) in &pixels {
        for dy in -3..=3 {
            for dx in -3..=3 {
                put(&mut img, x + dx, y + dy, blue);
            }
        }
    }
    img
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if (0..img.width() as i64).contains(&x) && (0..img.height() as i64).contains(&y) {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Bresenham line.
fn line(img: &mut RgbImage, (mut x, mut y): (i64, i64), (xe, ye): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((xe - x).abs(), -(ye - y).abs());
    let (sx, sy) = ((xe - x).signum(), (ye - y).signum());
    let mut err = dx + dy;
    loop {
        put(img, x, y, c);
        if x == xe && y == ye {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}
