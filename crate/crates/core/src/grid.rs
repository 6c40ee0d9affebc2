use alloc::vec;
use alloc::vec::Vec;

use crate::event::SensorGeometry;

/// Dense row-major per-pixel storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrid<T> {
    geometry: SensorGeometry,
    cells: Vec<T>,
}

impl<T: Clone> PixelGrid<T> {
    pub fn new(geometry: SensorGeometry, fill: T) -> Self {
        PixelGrid {
            geometry,
            cells: vec![fill; geometry.pixel_count()],
        }
    }

    pub fn fill(&mut self, value: T) {
        self.cells.iter_mut().for_each(|c| *c = value.clone());
    }
}

impl<T> PixelGrid<T> {
    #[inline]
    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    #[inline]
    pub fn get(&self, x: u16, y: u16) -> Option<&T> {
        self.geometry.index(x, y).map(|i| &self.cells[i])
    }

    #[inline]
    pub fn get_mut(&mut self, x: u16, y: u16) -> Option<&mut T> {
        self.geometry.index(x, y).map(move |i| &mut self.cells[i])
    }

    /// Signed-coordinate lookup for neighbourhood scans; `None` outside the frame.
    #[inline]
    pub fn get_signed(&self, x: i32, y: i32) -> Option<&T> {
        if x < 0 || y < 0 || x >= self.geometry.width() as i32 || y >= self.geometry.height() as i32 {
            return None;
        }
        Some(&self.cells[y as usize * self.geometry.width() as usize + x as usize])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.cells
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.cells
    }
}
