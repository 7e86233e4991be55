//! Vision-guided docking and transport for a simulated snake robot.

pub mod geom;
pub mod metrics;
pub mod numeric;
pub mod snake;
pub mod planner;
pub mod perception;
pub mod sim;
