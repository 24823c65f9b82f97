//! Rain streak appearance and compositing.

mod composite;
mod sprite;
mod warp;

pub use composite::{
    blend_streak, circle_of_confusion, defocus, disk_kernel, restore_luminosity, ExposureTimes,
};
pub use sprite::{
    load_streak_library, procedural_streak, SpriteSource, StreakLibrary, StreakSprite, TAU0_S,
};
pub use warp::{sprite_quad, streak_quad, warp_streak, warp_to_quad, Homography, PlacedRaster, Quad};
