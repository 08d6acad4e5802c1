use serde::{Deserialize, Serialize};

/// Outcome of a streaming run as seen by one subscriber.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamStats {
    pub messages_sent: u64,
    pub messages_received: u64,
    /// Serialized `data` bytes received.
    pub bytes: u64,
    /// Messages missing from the sequence, gaps and a short tail included.
    pub loss: u64,
    pub out_of_order: u64,
    pub crc_failures: u64,
    pub elapsed: f64,
    /// `bytes / elapsed`, 0 for an empty run.
    pub throughput: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Tracks one publisher's sequence numbers on one topic.
#[derive(Debug, Clone, Default)]
pub struct SeqTracker {
    next: Option<u64>,
    pub received: u64,
    pub loss: u64,
    pub out_of_order: u64,
}

impl SeqTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start expecting `first` (sequences need not start at 0).
    pub fn expecting(first: u64) -> Self {
        Self { next: Some(first), ..Self::default() }
    }

    pub fn observe(&mut self, seq: u64) {
        self.received += 1;
        match self.next {
            Some(n) if seq < n => {
                self.out_of_order += 1;
                // a late arrival fills a gap counted earlier
                self.loss = self.loss.saturating_sub(1);
                return;
            }
            Some(n) => self.loss += seq - n,
            None => {}
        }
        self.next = Some(seq + 1);
    }

    /// Count messages after the last one seen, up to `last_sent`.
    pub fn finish(&mut self, last_sent: Option<u64>) {
        if let Some(last) = last_sent {
            let next = self.next.unwrap_or(0);
            if last + 1 > next {
                self.loss += last + 1 - next;
                self.next = Some(last + 1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_stream() {
        let mut t = SeqTracker::expecting(0);
        (0..10).for_each(|s| t.observe(s));
        t.finish(Some(9));
        assert_eq!((t.received, t.loss, t.out_of_order), (10, 0, 0));
    }

    #[test]
    fn gaps_reorders_and_tail() {
        let mut t = SeqTracker::expecting(0);
        for s in [0, 1, 3, 2, 5] {
            t.observe(s);
        }
        t.finish(Some(7));
        // 4, 6, 7 never arrived
        assert_eq!((t.loss, t.out_of_order), (3, 1));
    }

    #[test]
    fn nothing_received() {
        let mut t = SeqTracker::expecting(0);
        t.finish(Some(4));
        assert_eq!(t.loss, 5);
        let mut e = SeqTracker::expecting(0);
        e.finish(None);
        assert_eq!(e.loss, 0);
    }
}
