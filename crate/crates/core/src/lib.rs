//! Undecimated wavelet denoising and word-embedded semantic marginalized
//! denoising autoencoders for multilingual anomaly scoring.

pub mod cli;
pub mod datagen;
pub mod denoise;
pub mod embed;
pub mod evalkit;
pub mod pipeline;
pub mod textprep;
pub mod wavelet;
pub mod wesma;
