use crate::error::{Error, Result};
use crate::model::{QueueState, Schedule};

/// Anything that picks the link-1 slot count for a frame.
///
/// Semi-static schedules ignore the state; dynamic policies look it up.
pub trait SlotPolicy: Sync {
    fn action(&self, epoch: u32, state: QueueState) -> Result<u32>;
}

impl SlotPolicy for Schedule {
    fn action(&self, epoch: u32, _state: QueueState) -> Result<u32> {
        self.link1()
            .get(epoch as usize)
            .copied()
            .ok_or_else(|| Error::domain(format!("schedule has no frame {epoch}")))
    }
}

impl<P: SlotPolicy + ?Sized> SlotPolicy for &P {
    fn action(&self, epoch: u32, state: QueueState) -> Result<u32> {
        (**self).action(epoch, state)
    }
}
