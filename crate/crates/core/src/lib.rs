//! Multichannel sound source localization.
//!
//! SRP-PHAT over a spherical DOA grid: per-pair GCC-PHAT local angular
//! spectra are computed on a coarse AOA axis, interpolated onto the global
//! grid, pooled across pairs / frequency / time, and peak-picked. A far-field
//! plane-wave scene simulator and an azimuth/elevation error reporter round
//! out the toolkit.
//!
//! The typical flow mirrors the `srploc` CLI:
//!
//! ```no_run
//! use srploc::pipeline::{locate, RunConfig};
//!
//! let config = RunConfig::new("geometries/robot_head_like_12ch.toml", "in.wav", "est.csv");
//! let summary = locate(&config).unwrap();
//! println!("{} estimates from {} pairs", summary.n_estimates, summary.n_pairs);
//! ```

pub mod eval;
pub mod gcc;
pub mod geometry;
pub mod pipeline;
pub mod sim;
pub mod srp;
pub mod stft;
pub mod wav;

pub use eval::{angular_errors, interpolate_trajectory, report, ErrorReport, TrajectoryRecord};
pub use gcc::{local_spectrum, phat_cross_spectrum, AoaAxis, LocalSpectrum};
pub use geometry::{ArrayGeometry, DoaGrid, MicPair, Vec3};
pub use pipeline::{locate, Estimate, Locator, RunConfig};
pub use sim::{render, SceneSpec, SourceSignal};
pub use srp::{find_peaks, pool, AngularSpectrum, PeakSpec, PoolingSpec};
pub use stft::{sine_window, stft, SignalBlock, Spectrogram};
pub use wav::{read_wav, write_wav_f32, Audio};
