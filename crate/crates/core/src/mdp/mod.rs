//! Environment-agnostic MDP vocabulary: steps, trajectories, returns,
//! horizon bookkeeping and the sliding-window agent context.

mod horizon;
mod returns;
mod trajectory;
mod window;

pub use horizon::{effective_horizon, HorizonProfile};
pub use returns::discounted_return;
pub use trajectory::{read_trajectories, write_trajectories, Outcome, Step, Trajectory};
pub use window::{build_window, Context, Observation, ObservationWindow, Turn, WindowEntry};
