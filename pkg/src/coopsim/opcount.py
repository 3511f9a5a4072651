"""Operation counter used to measure edge-round work empirically."""


class OpCounter:
    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, n: int = 1) -> None:
        self.count += n

    def reset(self) -> int:
        value = self.count
        self.count = 0
        return value
