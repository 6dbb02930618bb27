use std::collections::VecDeque;

use super::{EntityError, Message};
use crate::kernel::SimTime;
use crate::label::Frequency;

/// A paced FIFO: at each tick of its clock it releases the head message if
/// there is one, and nothing otherwise. Released messages have their timing
/// tags lowered to the pacer's frequency.
#[derive(Debug, Clone)]
pub struct Pacer {
    freq: Frequency,
    period: u64,
    phase: u64,
    queue: VecDeque<Message>,
}

impl Pacer {
    /// `freq` must be `1/n` for a positive integer `n` (the period in ticks);
    /// `phase` is the first tick and must be at least 1.
    pub fn new(freq: Frequency, phase: u64) -> Result<Self, EntityError> {
        let period = freq.unit_period().ok_or(EntityError::PacerFrequency(freq))?;
        if phase == 0 {
            return Err(EntityError::PacerPhase);
        }
        Ok(Pacer { freq, period, phase, queue: VecDeque::new() })
    }

    /// Phase defaults to one period.
    pub fn with_default_phase(freq: Frequency) -> Result<Self, EntityError> {
        let period = freq.unit_period().ok_or(EntityError::PacerFrequency(freq))?;
        Self::new(freq, period)
    }

    pub fn frequency(&self) -> Frequency {
        self.freq
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn phase(&self) -> u64 {
        self.phase
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn is_tick(&self, t: SimTime) -> bool {
        t.ticks() >= self.phase && (t.ticks() - self.phase).is_multiple_of(self.period)
    }

    pub fn first_tick(&self) -> SimTime {
        SimTime(self.phase)
    }

    pub fn enqueue(&mut self, msg: Message) {
        self.queue.push_back(msg);
    }

    /// Releases at most one message. Calling this off a tick boundary is an error.
    pub fn tick(&mut self, t: SimTime) -> Result<Option<Message>, EntityError> {
        if !self.is_tick(t) {
            return Err(EntityError::OffTick { t: t.ticks(), phase: self.phase, period: self.period });
        }
        let Some(mut msg) = self.queue.pop_front() else { return Ok(None) };
        msg.label = msg.label.pace_downgrade(self.freq).expect("pacer frequency is finite");
        Ok(Some(msg))
    }
}
