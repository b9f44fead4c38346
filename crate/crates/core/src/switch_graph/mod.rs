pub mod loops;
pub mod matching;

pub use loops::{ball_tree_avoiding, count_loops, local_ball, loops_up_to, LocalBall};
pub use matching::{EdgeKey, HalfEdge, Matching, SwitchMark};
