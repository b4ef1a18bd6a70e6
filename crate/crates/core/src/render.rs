//! Rasterise pendulum states into the grayscale frames the learner sees.
//!
//! Links are bright anti-aliased capsules on a black background. The pivot
//! sits at the image centre and the fully extended pendulum fits inside the
//! frame with a 2-pixel margin. Intensity at a pixel is the linear
//! coverage ramp `clamp(w/2 + 1/2 − d, 0, 1)` where `d` is the distance
//! from the pixel centre to the link segment.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simworld::{Env, PendulumParams, PendulumState};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// Row-major, every value in `[0, 1]`.
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::dim(format!("pixel buffer for {width}x{height} frame"), width * height, pixels.len()));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("frame intensities must lie in [0, 1]".into()));
        }
        Ok(Frame { width, height, pixels })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        Frame {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Quantise to bytes, `round(v · 255)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(Error::dim("frame byte count", width * height, bytes.len()));
        }
        Ok(Frame {
            width,
            height,
            pixels: bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
    }

    /// Clamp arbitrary values (e.g. a PCA reconstruction) into a valid frame.
    pub fn from_clamped(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        Frame::new(width, height, values.iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Camera and drawing settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    /// Stroke width in pixels.
    pub line_width: f64,
    /// Free border around the fully extended pendulum, pixels.
    pub margin: f64,
    /// Physical link lengths; only their ratios and sum matter.
    pub link_lengths: Vec<f64>,
}

impl Scene {
    /// Square scene of side `size`; stroke width is 4.5 px at 40 × 40 and
    /// scales with the side length.
    pub fn square(size: usize, link_lengths: &[f64]) -> Self {
        Scene {
            width: size,
            height: size,
            line_width: 4.5 * size as f64 / 40.0,
            margin: 2.0,
            link_lengths: link_lengths.to_vec(),
        }
    }

    /// 40 × 40 for the single pendulum, 48 × 48 for the double.
    pub fn for_env(env: Env, params: &PendulumParams) -> Self {
        let size = match env {
            Env::Single => 40,
            Env::Double => 48,
        };
        Scene::square(size, &params.link_lengths)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    fn pivot(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    fn pixels_per_meter(&self) -> f64 {
        let half = self.width.min(self.height) as f64 / 2.0;
        let reach = half - self.margin - self.line_width / 2.0;
        reach / self.link_lengths.iter().sum::<f64>()
    }

    /// Link segments in image coordinates (x right, y down).
    pub fn segments(&self, state: &PendulumState) -> Vec<((f64, f64), (f64, f64))> {
        let scale = self.pixels_per_meter();
        let mut start = self.pivot();
        let mut absolute = 0.0;
        let mut segs = Vec::with_capacity(state.links());
        for (angle, len) in state.angles.iter().zip(&self.link_lengths) {
            absolute += angle;
            let l = len * scale;
            let end = (start.0 + l * absolute.sin(), start.1 + l * absolute.cos());
            segs.push((start, end));
            start = end;
        }
        segs
    }
}

fn distance_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Draw `state` into a fresh frame.
pub fn render(state: &PendulumState, scene: &Scene) -> Frame {
    let segs = scene.segments(state);
    let half = scene.line_width / 2.0;
    let mut frame = Frame::blank(scene.width, scene.height);
    for y in 0..scene.height {
        for x in 0..scene.width {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v: f64 = 0.0;
            for &(a, b) in &segs {
                let d = distance_to_segment(p, a, b);
                v = v.max((half + 0.5 - d).clamp(0.0, 1.0));
            }
            frame.pixels[y * scene.width + x] = v;
        }
    }
    frame
}

/// Binary PGM bytes: `P5\n<w> <h>\n255\n` followed by one byte per pixel.
pub fn pgm_bytes(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend(frame.to_bytes());
    out
}

pub fn write_pgm(frame: &Frame, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&pgm_bytes(frame)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Frame> {
    const WHAT: &str = "PGM";
    let mut pos = 0usize;

    fn skip_space(bytes: &[u8], pos: &mut usize) {
        while *pos < bytes.len() {
            match bytes[*pos] {
                b' ' | b'\t' | b'\n' | b'\r' => *pos += 1,
                b'#' => {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn token(bytes: &[u8], pos: &mut usize, field: &str) -> Result<usize> {
        skip_space(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..*pos]).unwrap_or("");
        text.parse::<usize>()
            .map_err(|_| Error::parse(WHAT, field, "expected a decimal integer"))
    }

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(WHAT, "magic", "expected `P5`"));
    }
    pos += 2;
    let width = token(bytes, &mut pos, "width")?;
    let height = token(bytes, &mut pos, "height")?;
    let maxval = token(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::parse(WHAT, "maxval", format!("only 255 is supported, found {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(WHAT, "width", "image must not be empty"));
    }
    match bytes.get(pos) {
        Some(b' ' | b'\t' | b'\n' | b'\r') => pos += 1,
        _ => return Err(Error::parse(WHAT, "maxval", "missing whitespace before pixel data")),
    }
    let data = &bytes[pos..];
    if data.len() != width * height {
        return Err(Error::parse(
            WHAT,
            "pixel data",
            format!("expected {} bytes, found {}", width * height, data.len()),
        ));
    }
    Frame::from_bytes(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn single_scene() -> Scene {
        Scene::for_env(Env::Single, &Env::Single.default_params())
    }

    /// 8 × 8 point samples per pixel of the capsule indicator.
    fn supersampled(state: &PendulumState, scene: &Scene) -> Frame {
        let segs = scene.segments(state);
        let half = scene.line_width / 2.0;
        let mut frame = Frame::blank(scene.width, scene.height);
        for y in 0..scene.height {
            for x in 0..scene.width {
                let mut hits = 0;
                for sy in 0..8 {
                    for sx in 0..8 {
                        let p = (x as f64 + (sx as f64 + 0.5) / 8.0, y as f64 + (sy as f64 + 0.5) / 8.0);
                        if segs.iter().any(|&(a, b)| distance_to_segment(p, a, b) <= half) {
                            hits += 1;
                        }
                    }
                }
                frame.pixels[y * scene.width + x] = hits as f64 / 64.0;
            }
        }
        frame
    }

    #[test]
    fn hanging_pendulum_lights_only_the_lower_centre_band() {
        let scene = single_scene();
        let f = render(&PendulumState::rest(1), &scene);
        let mut lit = 0;
        for y in 0..40 {
            for x in 0..40 {
                if f.at(x, y) > 0.0 {
                    lit += 1;
                    // Round cap at the pivot reaches a couple of pixels up.
                    assert!(y >= 17, "lit pixel above pivot at ({x},{y})");
                    assert!((17..=22).contains(&x), "lit pixel off the centre band at ({x},{y})");
                }
            }
        }
        assert!(lit > 30);
    }

    #[test]
    fn periodic_in_angle() {
        let scene = single_scene();
        let a = render(&PendulumState::at_angles(&[0.7]), &scene);
        let b = render(&PendulumState::at_angles(&[0.7 + 2.0 * PI]), &scene);
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_supersampling_oracle() {
        let scene = single_scene();
        let s = PendulumState::at_angles(&[PI / 4.0]);
        let fast = render(&s, &scene);
        let oracle = supersampled(&s, &scene);
        let worst = fast.pixels.iter().zip(&oracle.pixels).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 0.1, "max per-pixel deviation {worst}");

        let dscene = Scene::for_env(Env::Double, &Env::Double.default_params());
        let s2 = PendulumState::at_angles(&[PI / 4.0, 1.0]);
        let fast = render(&s2, &dscene);
        let oracle = supersampled(&s2, &dscene);
        let worst = fast.pixels.iter().zip(&oracle.pixels).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 0.1, "double: max per-pixel deviation {worst}");
    }

    #[test]
    fn down_and_up_frames_differ_visibly() {
        let scene = single_scene();
        let down = render(&PendulumState::rest(1), &scene);
        let up = render(&PendulumState::at_angles(&[PI]), &scene);
        let changed = down.pixels.iter().zip(&up.pixels).filter(|(a, b)| (*a - *b).abs() > 1e-9).count();
        assert!(changed as f64 >= 0.1 * 1600.0);
    }

    #[test]
    fn one_degree_moves_little() {
        let scene = single_scene();
        for k in 0..360 {
            let a = (k as f64).to_radians();
            let f0 = render(&PendulumState::at_angles(&[a]), &scene);
            let f1 = render(&PendulumState::at_angles(&[a + 1f64.to_radians()]), &scene);
            let mean = f0.pixels.iter().zip(&f1.pixels).map(|(x, y)| (x - y).abs()).sum::<f64>() / 1600.0;
            assert!(mean < 0.05);
        }
    }

    #[test]
    fn intensities_in_unit_interval_and_deterministic() {
        let scene = Scene::for_env(Env::Double, &Env::Double.default_params());
        let s = PendulumState::at_angles(&[2.0, -1.3]);
        let a = render(&s, &scene);
        assert!(a.pixels.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a.pixels.len(), 48 * 48);
        assert_eq!(a, render(&s, &scene));
    }

    #[test]
    fn zero_frame_pgm_bytes_are_exact() {
        let bytes = pgm_bytes(&Frame::blank(2, 2));
        let mut want = b"P5\n2 2\n255\n".to_vec();
        want.extend([0u8; 4]);
        assert_eq!(bytes, want);
    }

    #[test]
    fn pgm_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        let f = render(&PendulumState::at_angles(&[1.1]), &single_scene());
        write_pgm(&f, &path).unwrap();
        let header = b"P5\n40 40\n255\n".len() as u64;
        assert_eq!(fs::metadata(&path).unwrap().len(), header + 1600);
        let back = read_pgm(&path).unwrap();
        let worst = f.pixels.iter().zip(&back.pixels).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1.0 / 510.0 + 1e-12);
    }

    #[test]
    fn malformed_pgm_names_the_field() {
        let cases: [(&[u8], &str); 4] = [
            (b"P6\n2 2\n255\n0000", "magic"),
            (b"P5\nx 2\n255\n0000", "width"),
            (b"P5\n2 2\n65535\n0000", "maxval"),
            (b"P5\n2 2\n255\n000", "pixel data"),
        ];
        for (bytes, field) in cases {
            let err = parse_pgm(bytes).unwrap_err().to_string();
            assert!(err.contains(field), "{err} should name {field}");
        }
        let err = read_pgm(Path::new("/nonexistent/x.pgm")).unwrap_err().to_string();
        assert!(err.contains("/nonexistent/x.pgm"));
    }

    proptest::proptest! {
        #[test]
        fn pgm_round_trip_within_quantisation(
            w in 1usize..12, h in 1usize..12, seed in proptest::prelude::any::<u64>()
        ) {
            let mut s = seed;
            let pixels: Vec<f64> = (0..w * h).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            }).collect();
            let f = Frame::new(w, h, pixels).unwrap();
            let back = parse_pgm(&pgm_bytes(&f)).unwrap();
            for (a, b) in f.pixels.iter().zip(&back.pixels) {
                proptest::prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
            }
        }
    }
}
