//! Reactive social responses: a small state machine mapping perceived
//! gestures to motion-primitive replies.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub const WAVE_BACK_TICKS: u64 = 120;
pub const HANDSHAKE_TICKS: u64 = 90;
pub const QUEUE_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Wave,
    Stretch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialSignal {
    pub agent_id: String,
    pub kind: SignalKind,
    pub tick: u64,
}

/// Body of a `/agent/<id>/signal` message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPayload {
    pub kind: SignalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    WaveBack,
    HandshakeReach,
    Idle,
}

/// Body of a response message: `{"kind":...,"duration":n,"target":id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponsePrimitive {
    pub kind: ResponseKind,
    pub duration: u64,
    pub target: String,
}

impl ResponsePrimitive {
    pub fn for_signal(signal: &SocialSignal) -> Self {
        let (kind, duration) = match signal.kind {
            SignalKind::Wave => (ResponseKind::WaveBack, WAVE_BACK_TICKS),
            SignalKind::Stretch => (ResponseKind::HandshakeReach, HANDSHAKE_TICKS),
        };
        Self { kind, duration, target: signal.agent_id.clone() }
    }

    pub fn idle(target: impl Into<String>) -> Self {
        Self { kind: ResponseKind::Idle, duration: 0, target: target.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SocialState {
    Idle,
    Busy { primitive: ResponsePrimitive, remaining: u64 },
}

/// Idle until a gesture arrives, then busy for the response's duration.
/// Gestures seen while busy wait in a queue of `QUEUE_DEPTH`; the oldest is
/// dropped on overflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialFsm {
    pub state: SocialState,
    pub queue: VecDeque<SocialSignal>,
    pub dropped: u64,
}

impl Default for SocialFsm {
    fn default() -> Self {
        Self { state: SocialState::Idle, queue: VecDeque::with_capacity(QUEUE_DEPTH), dropped: 0 }
    }
}

impl SocialFsm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_idle(&self) -> bool {
        self.state == SocialState::Idle
    }

    /// React to a gesture. Returns the primitive started now, or an idle
    /// primitive when the gesture was queued.
    pub fn on_signal(&mut self, signal: SocialSignal) -> ResponsePrimitive {
        if self.is_idle() {
            return self.start(&signal);
        }
        let target = signal.agent_id.clone();
        if self.queue.len() == QUEUE_DEPTH {
            self.queue.pop_front();
            self.dropped += 1;
        }
        self.queue.push_back(signal);
        ResponsePrimitive::idle(target)
    }

    fn start(&mut self, signal: &SocialSignal) -> ResponsePrimitive {
        let p = ResponsePrimitive::for_signal(signal);
        self.state = SocialState::Busy { primitive: p.clone(), remaining: p.duration };
        p
    }

    /// Advance one tick; returns a primitive if a queued gesture starts.
    pub fn tick(&mut self) -> Option<ResponsePrimitive> {
        if let SocialState::Busy { remaining, .. } = &mut self.state {
            *remaining -= 1;
            if *remaining == 0 {
                self.state = SocialState::Idle;
                let next = self.queue.pop_front()?;
                return Some(self.start(&next));
            }
        }
        None
    }

    pub fn advance(&mut self, ticks: u64) -> Vec<ResponsePrimitive> {
        (0..ticks).filter_map(|_| self.tick()).collect()
    }
}
