//! One module per subcommand.

pub mod fit_stats;
pub mod heat;
pub mod loss;
pub mod score;
pub mod simulate;
pub mod subsegment;
