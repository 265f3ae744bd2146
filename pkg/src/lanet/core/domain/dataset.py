from collections.abc import Mapping
from pathlib import Path
from typing import Callable, Iterable
from lanet.core.domain.scene import Scene


class SceneIndex(Mapping):
    """
    Read-only mapping scenario_id -> Scene over a set of scene files, loaded on
    first access and cached.
    """

    def __init__(self, paths: Iterable[Path], loader: Callable[[Path], Scene], suffix: str = ".scene.json"):
        self._loader = loader
        self._paths: dict[str, Path] = {}
        for p in sorted(Path(p) for p in paths):
            name = p.name[: -len(suffix)] if p.name.endswith(suffix) else p.stem
            self._paths[name] = p
        self._cache: dict[str, Scene] = {}

    def __getitem__(self, scenario_id: str) -> Scene:
        if scenario_id not in self._paths:
            raise KeyError(f"Scene '{scenario_id}' not found")
        if scenario_id not in self._cache:
            self._cache[scenario_id] = self._loader(self._paths[scenario_id])
        return self._cache[scenario_id]

    def __iter__(self):
        return iter(self._paths)

    def __len__(self):
        return len(self._paths)

    def scenes(self) -> list[Scene]:
        return [self[k] for k in self]

    def __repr__(self):
        return repr(sorted(self._paths.keys(), key=str.lower))
