//! Synthetic speakers, dynamic mixing and WAV I/O.

pub mod synth;
pub mod wav;

pub use synth::{
    db_to_gain, dynamic_mix, generate_sources, mix_with_gains, speaker_band, MixSpec, MixtureExample, NoiseSpec,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, WavAudio, WavError, WriteReport};
