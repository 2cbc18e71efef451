//! Simulation of battery cells connected in parallel.
//!
//! Each cell is a first-order equivalent circuit. The branch currents of the
//! pack follow from Kirchhoff's laws and are solved in closed form (ideal
//! busbars) or by an O(n) recurrence (resistive busbars), which turns the
//! pack model into an ordinary ODE that [`sim`] integrates with Runge–Kutta
//! methods. [`design`] sizes series resistances for equal current sharing,
//! and [`io`] handles configs, profiles and traces.

pub mod cell;
pub mod solver;
pub mod sim;
pub mod design;
pub mod io;
