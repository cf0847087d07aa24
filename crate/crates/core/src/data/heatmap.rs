use super::{Image, Landmark};

/// Gaussian landmark heatmap parameters. Amplitude is 1 and the background
/// maps to −1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapSpec {
    pub sigma: f64,
}

impl HeatmapSpec {
    /// σ = size / 64 px (2 px at 128×128).
    pub fn for_size(size: usize) -> Self {
        HeatmapSpec { sigma: size as f64 / 64.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// 3 identical channels in `[-1, 1]`.
    pub image: Image,
    /// Landmarks that fell outside the frame and were clamped onto it.
    pub clamped: usize,
    /// No landmarks were given; the heatmap is pure background.
    pub empty: bool,
}

/// Renders `2·max_k exp(−‖p − l_k‖² / 2σ²) − 1` on a `size × size` grid of
/// pixel centers, replicated to three channels.
pub fn render_heatmap(landmarks: &[Landmark], size: usize, spec: &HeatmapSpec) -> Heatmap {
    assert!(spec.sigma > 0.0, "sigma must be positive");
    let max = (size as f32 - 1.0).max(0.0);
    let mut clamped = 0;
    let points: Vec<(f64, f64)> = landmarks
        .iter()
        .map(|l| {
            let (x, y) = (l.x.clamp(0.0, max), l.y.clamp(0.0, max));
            if (x, y) != (l.x, l.y) {
                clamped += 1;
            }
            (f64::from(x), f64::from(y))
        })
        .collect();

    let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut field = vec![0.0f64; size * size];
    for &(lx, ly) in &points {
        // Beyond ~9σ the Gaussian is below f32 resolution of the mapped value.
        let reach = (9.0 * spec.sigma).ceil() as i64 + 1;
        let (cx, cy) = (lx.round() as i64, ly.round() as i64);
        let rows = (cy - reach).max(0)..(cy + reach + 1).min(size as i64);
        for row in rows {
            let dy = row as f64 - ly;
            let cols = (cx - reach).max(0)..(cx + reach + 1).min(size as i64);
            for col in cols {
                let dx = col as f64 - lx;
                let v = (-(dx * dx + dy * dy) * inv).exp();
                let cell = &mut field[row as usize * size + col as usize];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }

    let mut image = Image::filled(3, size, size, -1.0);
    for (i, v) in field.iter().enumerate() {
        let mapped = (2.0 * v - 1.0) as f32;
        for c in 0..3 {
            image.data[c * size * size + i] = mapped;
        }
    }
    Heatmap { image, clamped, empty: landmarks.is_empty() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_peak_decreases_radially() {
        let h = render_heatmap(&[Landmark::new(4.0, 4.0)], 8, &HeatmapSpec { sigma: 1.0 });
        let im = &h.image;
        assert_eq!(im.get(0, 4, 4), 1.0);
        for r in 1..4 {
            assert!(im.get(0, 4, 4 + r) < im.get(0, 4, 4 + r - 1));
            assert!(im.get(0, 4 - r, 4) < im.get(0, 4 - r + 1, 4));
        }
        assert_eq!(im.get(0, 4, 5), im.get(2, 4, 5));
        assert!(!h.empty);
    }

    #[test]
    fn no_landmarks_is_background() {
        let h = render_heatmap(&[], 6, &HeatmapSpec::for_size(6));
        assert!(h.empty);
        assert!(h.image.data.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn out_of_frame_points_are_clamped() {
        let h = render_heatmap(&[Landmark::new(-3.0, 2.0), Landmark::new(2.0, 2.0)], 8, &HeatmapSpec { sigma: 1.0 });
        assert_eq!(h.clamped, 1);
        assert_eq!(h.image.get(0, 2, 0), 1.0);
    }

    #[test]
    fn default_sigma_scales_with_size() {
        assert_eq!(HeatmapSpec::for_size(128).sigma, 2.0);
        assert_eq!(HeatmapSpec::for_size(32).sigma, 0.5);
    }

    /// Independent per-pixel evaluation over every landmark, no window.
    fn brute_force(landmarks: &[Landmark], size: usize, sigma: f64) -> Vec<f64> {
        let mut out = vec![0.0; size * size];
        for row in 0..size {
            for col in 0..size {
                let mut h = 0.0f64;
                for l in landmarks {
                    let (dx, dy) = (col as f64 - f64::from(l.x), row as f64 - f64::from(l.y));
                    h = h.max((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
                }
                out[row * size + col] = 2.0 * h - 1.0;
            }
        }
        out
    }

    #[test]
    fn two_landmarks_match_pixelwise_max() {
        let a = Landmark::new(2.0, 3.0);
        let b = Landmark::new(5.5, 4.25);
        let spec = HeatmapSpec { sigma: 1.2 };
        let both = render_heatmap(&[a, b], 8, &spec).image;
        let ha = render_heatmap(&[a], 8, &spec).image;
        let hb = render_heatmap(&[b], 8, &spec).image;
        for i in 0..both.data.len() {
            assert_eq!(both.data[i], ha.data[i].max(hb.data[i]));
        }
    }

    proptest::proptest! {
        #[test]
        fn matches_brute_force(
            pts in proptest::collection::vec((0.0f32..31.0, 0.0f32..31.0), 0..8),
            sigma in 0.3f64..3.0,
        ) {
            let lms: Vec<Landmark> = pts.iter().map(|&(x, y)| Landmark::new(x, y)).collect();
            let h = render_heatmap(&lms, 32, &HeatmapSpec { sigma });
            let oracle = brute_force(&lms, 32, sigma);
            for c in 0..3 {
                for (i, o) in oracle.iter().enumerate() {
                    proptest::prop_assert!((f64::from(h.image.data[c * 1024 + i]) - o).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn flip_commutes_with_render(pts in proptest::collection::vec((0u32..7937, 0u32..7937), 1..6)) {
            // Landmarks on a 1/256 px grid, so the mirrored coordinate is exact in f32.
            let lms: Vec<Landmark> = pts.iter().map(|&(x, y)| Landmark::new(x as f32 / 256.0, y as f32 / 256.0)).collect();
            let flipped: Vec<Landmark> = lms.iter().map(|l| Landmark::new(31.0 - l.x, l.y)).collect();
            let spec = HeatmapSpec::for_size(32);
            let a = render_heatmap(&flipped, 32, &spec).image;
            let b = render_heatmap(&lms, 32, &spec).image.flip_horizontal();
            proptest::prop_assert_eq!(a, b);
        }

        #[test]
        fn values_in_range(pts in proptest::collection::vec((-5.0f32..40.0, -5.0f32..40.0), 0..6)) {
            let lms: Vec<Landmark> = pts.iter().map(|&(x, y)| Landmark::new(x, y)).collect();
            let h = render_heatmap(&lms, 32, &HeatmapSpec::for_size(32));
            proptest::prop_assert!(h.image.data.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
