pub mod faces;
pub mod oracles;
