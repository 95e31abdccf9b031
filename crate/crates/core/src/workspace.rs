//! Float counters for solver-held numeric buffers.
//!
//! Solvers register every buffer they keep alive with [`Workspace::hold`]; the
//! returned guard releases the count when dropped. `peak` is the largest number
//! of floats alive at once since the last [`Workspace::reset_peak`]. Counts are
//! exact and platform independent, unlike process memory probes.

use std::cell::Cell;

#[derive(Debug, Default)]
pub struct Workspace {
    live: Cell<usize>,
    peak: Cell<usize>,
}

#[must_use = "the buffer is released as soon as the guard drops"]
pub struct Held<'a> {
    ws: &'a Workspace,
    floats: usize,
}

impl Drop for Held<'_> {
    fn drop(&mut self) {
        self.ws.live.set(self.ws.live.get() - self.floats);
    }
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hold(&self, floats: usize) -> Held<'_> {
        let live = self.live.get() + floats;
        self.live.set(live);
        if live > self.peak.get() {
            self.peak.set(live);
        }
        Held { ws: self, floats }
    }

    pub fn live(&self) -> usize {
        self.live.get()
    }

    pub fn peak(&self) -> usize {
        self.peak.get()
    }

    pub fn reset_peak(&self) {
        self.peak.set(self.live.get());
    }
}
