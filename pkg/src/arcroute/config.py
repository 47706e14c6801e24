"""Line-oriented `key = value` configuration files.

Every tunable default in the toolkit is listed in DEFAULTS, so a config
file only needs the keys it overrides. Unknown keys and malformed lines
are rejected with the offending line number.
"""

from __future__ import annotations


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, str] = {
    # model
    "mds_dim": "8",
    "d_h": "128",
    "n_layers": "3",
    "n_heads": "8",
    "clip_c": "10",
    "init_seed": "0",
    # optimizer
    "learning_rate": "1e-4",
    "adam_beta1": "0.9",
    "adam_beta2": "0.999",
    "adam_epsilon": "1e-8",
    # supervised pre-training
    "sl_batch_size": "128",
    "sl_epochs": "10",
    "sl_shuffle_seed": "0",
    # PPO fine-tuning
    "ppo_batch_size": "64",
    "ppo_episodes": "200",
    "ppo_clip_epsilon": "0.1",
    "ppo_discount": "1",
    "ppo_inner_epochs": "1",
    "ppo_eval_pool": "30",
    "ppo_constrained": "true",
    # decoding
    "beam_width": "2",
    # teacher
    "teacher_budget": "10000",
    "teacher_stall_limit": "150",
    "exact_required_cap": "8",
    # dataset generation
    "dataset_scale": "Task20",
    "dataset_count": "500",
    "demand_lo": "5",
    "demand_hi": "10",
    "capacity": "100",
    "edge_factor": "1.3",
    "coord_scale": "100",
    # benchmarking
    "bench_repeats": "1",
}


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        values[key] = value
    return values


class Config:
    def __init__(self, overrides: dict[str, str] | None = None):
        self.values = dict(DEFAULTS)
        if overrides:
            self.values.update(overrides)

    @staticmethod
    def load(path) -> "Config":
        with open(path, "r", encoding="utf-8") as fh:
            return Config(parse_config_text(fh.read()))

    def get_int(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"config key {key} is not an integer: {self.values[key]!r}") from exc

    def get_float(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError as exc:
            raise ConfigError(f"config key {key} is not a number: {self.values[key]!r}") from exc

    def get_bool(self, key: str) -> bool:
        value = self.values[key].lower()
        if value in ("true", "1", "yes"):
            return True
        if value in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key} is not a boolean: {self.values[key]!r}")

    def get_str(self, key: str) -> str:
        return self.values[key]
