"""Byte-accounting model of the SRAM arena.

The arena is not an allocator. It tracks named slots, their sizes, and the
high-water mark of the live total, so measured peaks are deterministic.
"""

from tinyad.errors import BudgetError

PARAM_SLOT = "params"


class ArenaModel:
    def __init__(self, budget=None):
        self.budget = budget
        self.slots = {}
        self.live = 0
        self.high_water = 0
        self.high_water_layer = None
        self.param_high_water = 0
        self.layer = None
        self.events = []

    def _update(self, event, name, nbytes):
        self.events.append((event, name, nbytes, self.live, self.layer))
        if name == PARAM_SLOT:
            self.param_high_water = max(self.param_high_water, self.slots.get(PARAM_SLOT, 0))
        if self.live > self.high_water:
            self.high_water = self.live
            self.high_water_layer = self.layer
        if self.budget is not None and self.live > self.budget:
            where = "input load" if self.layer is None else f"layer {self.layer}"
            raise BudgetError(
                f"arena budget exceeded at {where}: {self.live} > {self.budget} bytes",
                layer_index=self.layer, live_bytes=self.live, budget=self.budget,
            )

    def alloc(self, name, nbytes):
        if name in self.slots:
            raise RuntimeError(f"slot {name!r} already allocated")
        self.slots[name] = int(nbytes)
        self.live += int(nbytes)
        self._update("alloc", name, nbytes)

    def resize(self, name, nbytes):
        self.live += int(nbytes) - self.slots[name]
        self.slots[name] = int(nbytes)
        self._update("resize", name, nbytes)

    def free(self, name):
        nbytes = self.slots.pop(name)
        self.live -= nbytes
        self.events.append(("free", name, nbytes, self.live, self.layer))

    def rename(self, old, new):
        self.slots[new] = self.slots.pop(old)

    def param_trace(self):
        """Resident parameter bytes after every arena event."""
        trace = []
        resident = 0
        for event, name, nbytes, _live, _layer in self.events:
            if name == PARAM_SLOT:
                resident = 0 if event == "free" else nbytes
            trace.append(resident)
        return trace
