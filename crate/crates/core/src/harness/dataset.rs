//! Packed frame/control recordings.
//!
//! ```text
//! "PXTQ" u8 env_tag u32 width u32 height u32 n_u u32 n_frames u32 n_trials
//! u32 trial_start[n_trials]
//! u8 frames[n_frames * width * height]      round(v · 255), row-major
//! f64 controls[n_frames * n_u]
//! ```
//!
//! Integers and reals are little-endian. Trial starts are frame indices,
//! strictly increasing, beginning at 0.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio;
use crate::error::{Error, Result};
use crate::render::Frame;
use crate::rlloop::Trajectory;
use crate::simworld::{ControlSignal, Env};

pub const DATASET_MAGIC: &[u8; 4] = b"PXTQ";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub env: Env,
    pub width: usize,
    pub height: usize,
    pub n_u: usize,
    pub trial_starts: Vec<usize>,
    /// Quantised pixels of every frame, concatenated.
    pub frames: Vec<u8>,
    /// Controls of every frame, concatenated.
    pub controls: Vec<f64>,
}

impl DatasetFile {
    pub fn from_trajectories(env: Env, trajectories: &[Trajectory]) -> Result<Self> {
        let first = trajectories
            .iter()
            .find_map(|t| t.frames.first())
            .ok_or_else(|| Error::InvalidArgument("a dataset needs at least one frame".into()))?;
        let (width, height) = (first.width, first.height);
        let mut out = DatasetFile {
            env,
            width,
            height,
            n_u: env.n_u(),
            trial_starts: Vec::with_capacity(trajectories.len()),
            frames: Vec::new(),
            controls: Vec::new(),
        };
        for traj in trajectories {
            if traj.is_empty() {
                return Err(Error::InvalidArgument("empty trial in dataset".into()));
            }
            if traj.controls.len() != traj.frames.len() {
                return Err(Error::dim("controls per trial", traj.frames.len(), traj.controls.len()));
            }
            out.trial_starts.push(out.n_frames());
            for (f, u) in traj.frames.iter().zip(&traj.controls) {
                if (f.width, f.height) != (width, height) {
                    return Err(Error::dim("frame pixels", width * height, f.width * f.height));
                }
                if u.0.len() != out.n_u {
                    return Err(Error::dim("control dimension", out.n_u, u.0.len()));
                }
                out.frames.extend(f.to_bytes());
                out.controls.extend_from_slice(&u.0);
            }
        }
        Ok(out)
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len() / (self.width * self.height).max(1)
    }

    pub fn n_trials(&self) -> usize {
        self.trial_starts.len()
    }

    /// Frame index range of trial `i`.
    pub fn trial_range(&self, i: usize) -> std::ops::Range<usize> {
        let end = self.trial_starts.get(i + 1).copied().unwrap_or_else(|| self.n_frames());
        self.trial_starts[i]..end
    }

    pub fn frame(&self, index: usize) -> Frame {
        let n = self.width * self.height;
        Frame::from_bytes(self.width, self.height, &self.frames[index * n..(index + 1) * n]).expect("sized by construction")
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        (0..self.n_trials())
            .map(|i| {
                let range = self.trial_range(i);
                Trajectory {
                    frames: range.clone().map(|t| self.frame(t)).collect(),
                    controls: range
                        .map(|t| ControlSignal(self.controls[t * self.n_u..(t + 1) * self.n_u].to_vec()))
                        .collect(),
                }
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        const WHAT: &str = "dataset";
        let n = self.n_frames();
        if self.trial_starts.first().is_some_and(|&s| s != 0) {
            return Err(Error::parse(WHAT, "trial starts", "first trial must start at frame 0"));
        }
        if self.trial_starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::parse(WHAT, "trial starts", "indices must be strictly increasing"));
        }
        if self.trial_starts.last().is_some_and(|&s| s >= n) {
            return Err(Error::parse(WHAT, "trial starts", format!("index beyond the {n} frames")));
        }
        if n > 0 && self.trial_starts.is_empty() {
            return Err(Error::parse(WHAT, "n_trials", "frames present but no trial boundaries"));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&[self.env.tag()])?;
        for v in [self.width, self.height, self.n_u, self.n_frames(), self.n_trials()] {
            binio::write_u32(w, v as u32)?;
        }
        for &s in &self.trial_starts {
            binio::write_u32(w, s as u32)?;
        }
        w.write_all(&self.frames)?;
        binio::write_f64s(w, &self.controls)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        const WHAT: &str = "dataset";
        binio::expect_magic(r, DATASET_MAGIC, WHAT)?;
        let tag = binio::read_u8(r, WHAT, "env tag")?;
        let env = Env::from_tag(tag).ok_or_else(|| Error::parse(WHAT, "env tag", format!("unknown tag {tag}")))?;
        let width = binio::read_u32(r, WHAT, "width")? as usize;
        let height = binio::read_u32(r, WHAT, "height")? as usize;
        let n_u = binio::read_u32(r, WHAT, "n_u")? as usize;
        if n_u != env.n_u() {
            return Err(Error::parse(WHAT, "n_u", format!("{n_u} controls for the {env} pendulum")));
        }
        let n_frames = binio::read_u32(r, WHAT, "n_frames")? as usize;
        let n_trials = binio::read_u32(r, WHAT, "n_trials")? as usize;
        if n_trials > n_frames {
            return Err(Error::parse(WHAT, "n_trials", format!("{n_trials} trials for {n_frames} frames")));
        }
        let trial_starts = (0..n_trials)
            .map(|i| binio::read_u32(r, WHAT, format!("trial start {i}")).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut frames = vec![0u8; n_frames * width * height];
        r.read_exact(&mut frames)
            .map_err(|e| Error::parse(WHAT, "frames", format!("truncated or unreadable ({e})")))?;
        let controls = binio::read_f64s(r, n_frames * n_u, WHAT, "controls")?;
        let out = DatasetFile {
            env,
            width,
            height,
            n_u,
            trial_starts,
            frames,
            controls,
        };
        out.check()?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        DatasetFile::read_from(&mut BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(len: usize, n_u: usize, seed: u8) -> Trajectory {
        Trajectory {
            frames: (0..len)
                .map(|i| Frame::from_bytes(3, 2, &[seed, i as u8, 0, 255, 7, seed.wrapping_mul(3)]).unwrap())
                .collect(),
            controls: (0..len).map(|i| ControlSignal(vec![i as f64 * 0.5 - f64::from(seed); n_u])).collect(),
        }
    }

    #[test]
    fn header_layout() {
        let d = DatasetFile::from_trajectories(Env::Single, &[traj(2, 1, 1), traj(3, 1, 2)]).unwrap();
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..5], b"PXTQ\x00");
        let words: Vec<u32> = bytes[5..5 + 7 * 4].chunks(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(words, vec![3, 2, 1, 5, 2, 0, 2]);
        assert_eq!(bytes.len(), 5 + 7 * 4 + 5 * 6 + 5 * 8);
        assert_eq!(d.trial_range(1), 2..5);
    }

    #[test]
    fn rejects_bad_boundaries_and_truncation() {
        let d = DatasetFile::from_trajectories(Env::Single, &[traj(2, 1, 1), traj(2, 1, 2)]).unwrap();
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();

        let mut swapped = bytes.clone();
        // second trial start (offset 5 + 6*4) set to 0: no longer increasing
        swapped[29..33].copy_from_slice(&0u32.to_le_bytes());
        let err = DatasetFile::read_from(&mut swapped.as_slice()).unwrap_err().to_string();
        assert!(err.contains("trial starts"), "{err}");

        let err = DatasetFile::read_from(&mut &bytes[..bytes.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("controls"), "{err}");

        let mut wrong_env = bytes.clone();
        wrong_env[4] = 9;
        assert!(DatasetFile::read_from(&mut wrong_env.as_slice()).unwrap_err().to_string().contains("env tag"));
    }

    #[test]
    fn rejects_mixed_frame_sizes() {
        let mut t = traj(2, 1, 0);
        t.frames[1] = Frame::blank(2, 2);
        assert!(DatasetFile::from_trajectories(Env::Single, &[t]).is_err());
        assert!(DatasetFile::from_trajectories(Env::Double, &[traj(2, 1, 0)]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(lens in proptest::collection::vec(1usize..6, 1..4), double in any::<bool>()) {
            let (env, n_u) = if double { (Env::Double, 2) } else { (Env::Single, 1) };
            let trajs: Vec<Trajectory> = lens.iter().enumerate().map(|(i, &l)| traj(l, n_u, i as u8)).collect();
            let d = DatasetFile::from_trajectories(env, &trajs).unwrap();
            let mut bytes = Vec::new();
            d.write_to(&mut bytes).unwrap();
            let back = DatasetFile::read_from(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(back.trajectories(), trajs);
        }
    }
}
