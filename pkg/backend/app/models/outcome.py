from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.models.enums import ExitCase
from app.schemas.reports import OutcomeSummary


class GameOutcome(BaseModel):
    """
    One playthrough. Paths have one row per step start plus the final state; exit
    times are +inf when the player stays inside up to the horizon.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    path_x: np.ndarray
    path_y: np.ndarray
    controls_a: np.ndarray
    controls_b: np.ndarray
    tau_x: float
    tau_y: float
    exit_case: ExitCase
    running_cost: float
    exit_cost: float
    tail_bound: float
    # joint state at min(tau, horizon)
    stop_x: np.ndarray
    stop_y: np.ndarray

    @property
    def tau(self) -> float:
        return min(self.tau_x, self.tau_y)

    @property
    def cost(self) -> float:
        return self.running_cost + self.exit_cost

    @property
    def stop_state(self) -> np.ndarray:
        return np.concatenate([self.stop_x, self.stop_y])

    def summary(self) -> OutcomeSummary:
        return OutcomeSummary(
            tau_x=self.tau_x,
            tau_y=self.tau_y,
            tau=self.tau,
            exit_case=self.exit_case,
            cost=self.cost,
            running_cost=self.running_cost,
            exit_cost=self.exit_cost,
            tail_bound=self.tail_bound,
        )

    def to_frame(self) -> pd.DataFrame:
        steps = self.controls_a.shape[0]
        columns = {"t": self.times}
        columns.update({f"x{i}": self.path_x[:, i] for i in range(self.path_x.shape[1])})
        columns.update({f"y{i}": self.path_y[:, i] for i in range(self.path_y.shape[1])})
        # the final row carries no control
        for prefix, controls in (("a", self.controls_a), ("b", self.controls_b)):
            for i in range(controls.shape[1]):
                columns[f"{prefix}{i}"] = np.append(controls[:, i], np.nan) if steps else np.full(1, np.nan)
        return pd.DataFrame(columns)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.12g")
        with path.open("a", encoding="utf-8") as handle:
            handle.write("\n")
            handle.write("\n".join(f"# {line}" for line in self.summary().to_key_values("summary")))
            handle.write("\n")
        return path
