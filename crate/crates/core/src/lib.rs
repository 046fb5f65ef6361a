pub mod geometry;
pub mod marks;
pub mod vlm;
pub mod prompts;
pub mod motion;
pub mod sim;
pub mod pipeline;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/intro.md")]
mod book_intro {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/marks.md")]
mod book_marks {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/camera.md")]
mod book_camera {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/prompts.md")]
mod book_prompts {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/motion.md")]
mod book_motion {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/simulator.md")]
mod book_simulator {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/runs.md")]
mod book_runs {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
