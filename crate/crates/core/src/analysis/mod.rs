//! Layer-wise retrieval analysis: how well each attention layer ranks the
//! gold paragraph of every subquery, polynomial trends over depth, choice
//! of retrieval layers, and the needle-in-a-haystack head count.

mod needle;
mod polyfit;
mod profile;

pub use needle::{build_haystack, needle_head_count, run_niah, Haystack, HaystackSpec, NiahRow};
pub use polyfit::{polyfit, polyval, quartic_fit, residual};
pub use profile::{gold_rank, profile_layers, select_layers, LayerProfile};
