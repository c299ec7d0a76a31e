pub mod filament;
pub mod io;
pub mod point_vortex;
pub mod reduced;
pub mod spectral;
pub mod traveling_wave;
