pub mod des;
pub mod aes;
