pub mod cli;
pub mod conditioning;
pub mod decoder;
pub mod duration;
pub mod encoder;
pub mod io;
pub mod model;
pub mod numerics;
pub mod score;
pub mod training;
