//! Applying EQ curves to audio.

mod fir;
mod wav;

pub use fir::{
    apply_eq, design_fir, fir_response_db, FirDesign, FirOptions, RenderReport, DEFAULT_NUM_TAPS,
};
pub use wav::{read_wav, wav_bytes, write_wav, AudioBuffer, SampleFormat, MIN_SAMPLE_RATE};
