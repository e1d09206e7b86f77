"""Policy evaluation: calendar baselines, trained agents, ablations, noise runs.

Everything here is read-only with respect to the policies it measures. Reward
columns are recomputed from the episode as it plays out (summed day by day for
every preset), never copied from training logs.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .env import (
    CropEnv,
    NoiseEntry,
    NoiseSpec,
    Observation,
    REWARD_PRESETS,
    RewardWeights,
    daily_reward,
    decode_action,
)
from .errors import ConfigurationError, InputError
from .simulator import SiteProfile, florida_like, zaragoza_like
from .weather import generate_weather


# --------------------------------------------------------------- schedules


@dataclass(frozen=True)
class BaselineSchedule:
    """Fixed-calendar management: (day, amount) pairs for each practice."""

    label: str
    fertilization: tuple[tuple[int, float], ...]
    irrigation: tuple[tuple[int, float], ...]

    def validate(self, season_length: int | None = None) -> None:
        for name, events in (("fertilization", self.fertilization),
                             ("irrigation", self.irrigation)):
            for day, amount in events:
                if day < 0:
                    raise ConfigurationError(f"{name} day {day} is negative")
                if amount < 0:
                    raise ConfigurationError(
                        f"{name} amount {amount} on day {day} is negative")
                if season_length is not None and day >= season_length:
                    raise ConfigurationError(
                        f"{name} day {day} falls outside a "
                        f"{season_length}-day season")

    @property
    def n_total(self) -> float:
        return float(sum(a for _, a in self.fertilization))

    @property
    def irrigation_total(self) -> float:
        return float(sum(a for _, a in self.irrigation))

    def n_for(self, day: int) -> float:
        return float(sum(a for d, a in self.fertilization if d == day))

    def w_for(self, day: int) -> float:
        return float(sum(a for d, a in self.irrigation if d == day))

    def last_day(self) -> int:
        days = [d for d, _ in self.fertilization] + [d for d, _ in self.irrigation]
        return max(days) if days else 0


def florida_baseline() -> BaselineSchedule:
    """Survey-style program: 360 kg/ha N in four splits, 394 mm water.

    Water is 20 mm weekly from day 7 plus a closing 14 mm top-up.
    """
    return BaselineSchedule(
        label="empirical baseline",
        fertilization=tuple((d, 90.0) for d in (10, 30, 50, 70)),
        irrigation=tuple((7 * k, 20.0) for k in range(1, 20)) + ((134, 14.0),),
    )


def zaragoza_baseline() -> BaselineSchedule:
    """Guideline program: 250 kg/ha N in two splits, 752 mm water.

    Water is 47 mm every 10 days from day 5, sixteen applications.
    """
    return BaselineSchedule(
        label="empirical baseline",
        fertilization=((12, 125.0), (45, 125.0)),
        irrigation=tuple((5 + 10 * k, 47.0) for k in range(16)),
    )


_BASELINES = {"florida_like": florida_baseline, "zaragoza_like": zaragoza_baseline}


def baseline_for(profile_name: str) -> BaselineSchedule:
    try:
        return _BASELINES[profile_name]()
    except KeyError:
        raise ConfigurationError(
            f"no baseline schedule for profile {profile_name!r}; "
            f"known: {sorted(_BASELINES)}"
        ) from None


# --------------------------------------------------------------- policies


class SchedulePolicy:
    """Open-loop policy: plays a calendar, never reads the observation."""

    def __init__(self, schedule: BaselineSchedule):
        schedule.validate()
        self.schedule = schedule
        self.label = schedule.label

    def act(self, day: int, obs: Observation) -> tuple[float, float]:
        return self.schedule.n_for(day), self.schedule.w_for(day)


class GreedyPolicy:
    """Closed-loop policy: the agent's greedy action each day."""

    def __init__(self, agent, label: str | None = None):
        self.agent = agent
        self.label = label or f"trained {agent.kind}"

    def act(self, day: int, obs: Observation) -> tuple[float, float]:
        action = self.agent.act_greedy(obs)
        return action.n_amount, action.w_amount


class MaskedGreedyPolicy(GreedyPolicy):
    """Greedy on one practice; the other practice follows a schedule."""

    def __init__(self, agent, schedule: BaselineSchedule, vary: str,
                 label: str | None = None):
        super().__init__(agent, label)
        if vary not in ("fertilization", "irrigation"):
            raise ConfigurationError(
                f"vary must be 'fertilization' or 'irrigation', got {vary!r}")
        self.schedule = schedule
        self.vary = vary
        if label is None:
            self.label = f"trained {vary} + baseline"

    def act(self, day: int, obs: Observation) -> tuple[float, float]:
        n, w = super().act(day, obs)
        if self.vary == "fertilization":
            return n, self.schedule.w_for(day)
        return self.schedule.n_for(day), w


class MaskedEnv:
    """Env wrapper used to train single-practice agents.

    The agent keeps the full action grid, but the masked practice is
    replaced by the schedule's amount for that day before the step runs,
    so only the varied practice has any effect.
    """

    def __init__(self, env: CropEnv, schedule: BaselineSchedule, vary: str):
        if vary not in ("fertilization", "irrigation"):
            raise ConfigurationError(
                f"vary must be 'fertilization' or 'irrigation', got {vary!r}")
        self.env = env
        self.schedule = schedule
        self.vary = vary

    def reset(self, seed: int | None = None):
        return self.env.reset(seed)

    def step(self, action):
        action = decode_action(action) if not hasattr(action, "n_amount") else action
        day = self.env.day
        if self.vary == "fertilization":
            return self.env.step_amounts(action.n_amount, self.schedule.w_for(day))
        return self.env.step_amounts(self.schedule.n_for(day), action.w_amount)

    @property
    def done(self) -> bool:
        return self.env.done


# --------------------------------------------------------------- episodes


RF_LABELS = tuple(sorted(REWARD_PRESETS))


@dataclass(frozen=True)
class EpisodeRecord:
    """Totals and per-preset cumulative rewards for one evaluated episode."""

    seed: int
    yield_final: float
    n_total: float
    irrigation_total: float
    leach_total: float
    days: int
    rf: dict[str, float]


def run_eval_episode(
    policy,
    profile: SiteProfile,
    seed: int,
    noise: NoiseSpec | None = None,
    weather=None,
) -> EpisodeRecord:
    """Play one noise-free or noisy episode and account every preset."""
    env = CropEnv(profile, seed, REWARD_PRESETS["RF1"], noise=noise,
                  weather=weather)
    obs = env.reset()
    totals = {label: 0.0 for label in RF_LABELS}
    day = 0
    info = None
    while not env.done:
        n, w = policy.act(day, obs)
        obs, _, done, info = env.step_amounts(n, w)
        state_leach = env.true_observation.leach_today
        harvest = info.yield_final if done else None
        for label in RF_LABELS:
            totals[label] += daily_reward(n, w, state_leach, harvest,
                                          REWARD_PRESETS[label])
        day += 1
    return EpisodeRecord(
        seed=seed,
        yield_final=info.yield_final,
        n_total=info.n_total,
        irrigation_total=info.irrigation_total,
        leach_total=info.leach_total,
        days=info.days,
        rf=totals,
    )


def _episode_task(args) -> EpisodeRecord:
    policy, profile, seed, noise, weather = args
    return run_eval_episode(policy, profile, seed, noise, weather)


def _run_episodes(policy, profile, seeds, noise=None, weather=None,
                  workers: int = 1) -> list[EpisodeRecord]:
    tasks = [(policy, profile, int(s), noise, weather) for s in seeds]
    if workers <= 1 or len(tasks) <= 1:
        return [_episode_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so aggregation is seed-ordered
        # and results do not depend on scheduling
        return list(pool.map(_episode_task, tasks, chunksize=8))


# --------------------------------------------------------------- reports


@dataclass(frozen=True)
class EvalRow:
    label: str
    n_total: float
    irrigation_total: float
    yield_mean: float
    rf: dict[str, float]
    episodes: tuple[EpisodeRecord, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class EvalReport:
    profile_name: str
    seeds: tuple[int, ...]
    rows: tuple[EvalRow, ...]
    noise_label: str = "none"

    def row(self, label: str) -> EvalRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise InputError(f"no row labelled {label!r} in report")

    def merged(self, other: "EvalReport") -> "EvalReport":
        if other.profile_name != self.profile_name or other.seeds != self.seeds:
            raise InputError("reports to merge cover different runs")
        return replace(self, rows=self.rows + other.rows)


def _aggregate(label: str, records: list[EpisodeRecord]) -> EvalRow:
    return EvalRow(
        label=label,
        n_total=float(np.mean([r.n_total for r in records])),
        irrigation_total=float(np.mean([r.irrigation_total for r in records])),
        yield_mean=float(np.mean([r.yield_final for r in records])),
        rf={lab: float(np.mean([r.rf[lab] for r in records]))
            for lab in RF_LABELS},
        episodes=tuple(records),
    )


def evaluate_policy(
    policy,
    profile: SiteProfile,
    seeds,
    noise: NoiseSpec | None = None,
    workers: int = 1,
) -> EvalReport:
    """Noise-free (or noisy) evaluation; means over the given seeds.

    All five reward presets are accounted regardless of what the policy
    was trained on, matching how the comparison tables are laid out.
    """
    if not seeds:
        raise InputError("evaluate_policy needs at least one seed")
    records = _run_episodes(policy, profile, seeds, noise=noise, workers=workers)
    return EvalReport(
        profile_name=profile.name,
        seeds=tuple(int(s) for s in seeds),
        rows=(_aggregate(policy.label, records),),
        noise_label="none" if noise is None or not noise else "custom",
    )


def evaluate_policies(policies, profile, seeds, workers: int = 1) -> EvalReport:
    report = None
    for policy in policies:
        part = evaluate_policy(policy, profile, seeds, workers=workers)
        report = part if report is None else report.merged(part)
    return report


# --------------------------------------------------------------- ablations


def _train_agent(env_factory, config, agent_config=None, kind="transformer"):
    # imported lazily so evaluation workers do not carry the training stack
    from .agents import AgentConfig, build_agent
    from .dqn import train

    agent_config = agent_config or AgentConfig(kind=kind)
    agent = build_agent(agent_config, seed=config.seed)
    train(env_factory, agent, config)
    return agent


def ablate_separate(
    profile: SiteProfile,
    weights: RewardWeights,
    config,
    agent_config=None,
    eval_seeds=(101, 102, 103, 104, 105),
    workers: int = 1,
) -> EvalReport:
    """Four-row comparison: joint training vs one practice at a time.

    "Trained irrigation" means the nitrogen side is pinned to the baseline
    calendar during both training and evaluation, and vice versa.
    """
    schedule = baseline_for(profile.name)
    schedule.validate(profile.season_length)

    def factory_for(vary):
        if vary is None:
            return lambda: CropEnv(profile, config.seed, weights)
        return lambda: MaskedEnv(CropEnv(profile, config.seed, weights),
                                 schedule, vary)

    policies = [SchedulePolicy(schedule)]
    irrigation_agent = _train_agent(factory_for("irrigation"), config, agent_config)
    policies.append(MaskedGreedyPolicy(
        irrigation_agent, schedule, "irrigation",
        label="trained irrigation + baseline N"))
    fert_agent = _train_agent(factory_for("fertilization"), config, agent_config)
    policies.append(MaskedGreedyPolicy(
        fert_agent, schedule, "fertilization",
        label="trained N + baseline irrigation"))
    joint_agent = _train_agent(factory_for(None), config, agent_config)
    policies.append(GreedyPolicy(joint_agent, label="trained N + irrigation"))

    return evaluate_policies(policies, profile, eval_seeds, workers=workers)


@dataclass(frozen=True)
class ArchitectureRow:
    kind: str
    param_count: int
    analytic_count: int
    rf1_mean: float
    per_seed: tuple[float, ...]


def ablate_architecture(
    profile: SiteProfile,
    weights: RewardWeights,
    kinds=("mlp3", "mlp5", "transformer"),
    config=None,
    train_seeds=(0, 1, 2),
    eval_seeds=(101, 102, 103, 104, 105),
    workers: int = 1,
) -> tuple[ArchitectureRow, ...]:
    """Same budget and seeds for every architecture; reports RF1 + sizes."""
    from .agents import AgentConfig

    if config is None:
        raise ConfigurationError("ablate_architecture needs a training config")
    rows = []
    for kind in kinds:
        agent_config = AgentConfig(kind=kind)
        per_seed = []
        param_count = analytic = 0
        for seed in train_seeds:
            agent = _train_agent(
                lambda: CropEnv(profile, seed, weights),
                replace(config, seed=seed),
                agent_config,
            )
            param_count = agent.param_count()
            analytic = agent_config.analytic_param_count()
            report = evaluate_policy(
                GreedyPolicy(agent), profile, eval_seeds, workers=workers)
            per_seed.append(report.rows[0].rf["RF1"])
        rows.append(ArchitectureRow(
            kind=kind,
            param_count=param_count,
            analytic_count=analytic,
            rf1_mean=float(np.mean(per_seed)),
            per_seed=tuple(per_seed),
        ))
    return tuple(rows)


# --------------------------------------------------------------- noise


@dataclass(frozen=True)
class NoiseCase:
    label: str
    level: str
    spec: NoiseSpec


def _temperature_entries(level: float) -> tuple[NoiseEntry, ...]:
    return tuple(NoiseEntry(f, "absolute_uniform", level)
                 for f in ("tmax", "tmin", "tmean"))


def default_noise_table() -> tuple[NoiseCase, ...]:
    """The measured-variable grid: two levels each, plus the combined row."""
    sw = lambda m: NoiseEntry("soil_water_fraction", "absolute_uniform", m)
    srad = lambda m: NoiseEntry("srad", "relative_uniform", m)
    lai = lambda m: NoiseEntry("lai", "relative_uniform", m)
    rain = NoiseEntry("rain_today", "rain_accuracy", 0.9)
    combined = NoiseSpec((sw(0.02),) + _temperature_entries(2.0)
                         + (srad(0.02), rain, lai(0.20)))
    return (
        NoiseCase("no noise", "", NoiseSpec(())),
        NoiseCase("soil water content", "+-0.02", NoiseSpec((sw(0.02),))),
        NoiseCase("soil water content", "+-0.05", NoiseSpec((sw(0.05),))),
        NoiseCase("temperature", "+-1", NoiseSpec(_temperature_entries(1.0))),
        NoiseCase("temperature", "+-2", NoiseSpec(_temperature_entries(2.0))),
        NoiseCase("solar radiation", "+-2%", NoiseSpec((srad(0.02),))),
        NoiseCase("solar radiation", "+-10%", NoiseSpec((srad(0.10),))),
        NoiseCase("rain fall", "90% acc.", NoiseSpec((rain,))),
        NoiseCase("leaf area index", "+-10%", NoiseSpec((lai(0.10),))),
        NoiseCase("leaf area index", "+-20%", NoiseSpec((lai(0.20),))),
        NoiseCase("combined", "all of the above", combined),
    )


@dataclass(frozen=True)
class NoiseRow:
    label: str
    level: str
    rf1_mean: float
    rf1_std: float
    decrease_pct: float


@dataclass(frozen=True)
class NoiseReport:
    profile_name: str
    policy_label: str
    runs: int
    weather_seed: int
    rows: tuple[NoiseRow, ...]
    baseline_rf1: float | None = None


def noise_robustness(
    policy,
    profile: SiteProfile,
    cases: tuple[NoiseCase, ...] | None = None,
    runs: int = 400,
    weather_seed: int = 7,
    baseline: BaselineSchedule | None = None,
    workers: int = 1,
) -> NoiseReport:
    """Repeated noisy evaluation of one policy on one fixed season.

    The season's weather is pinned by ``weather_seed`` so that run-to-run
    spread measures the noise alone; each run draws fresh noise. The
    percent decrease is taken against the same policy's noise-free mean.
    """
    if runs < 1:
        raise ConfigurationError("runs must be >= 1")
    cases = default_noise_table() if cases is None else cases
    weather = generate_weather(profile.weather, profile.season_length,
                               weather_seed)
    noise_free = None
    rows = []
    for index, case in enumerate(cases):
        seeds = [int(s) for s in
                 np.random.SeedSequence([weather_seed, index]).generate_state(runs)]
        spec = case.spec if case.spec else None
        records = _run_episodes(policy, profile, seeds, noise=spec,
                                weather=weather, workers=workers)
        values = np.array([r.rf["RF1"] for r in records])
        mean = float(values.mean())
        std = float(values.std(ddof=0))
        if not case.spec:
            noise_free = mean
        if noise_free is None:
            raise ConfigurationError(
                "the first noise case must be the noise-free row")
        if noise_free == 0 or mean == noise_free:
            decrease = 0.0
        else:
            decrease = 100.0 * (noise_free - mean) / noise_free
        rows.append(NoiseRow(case.label, case.level, mean, std,
                             round(decrease, 6)))

    baseline_rf1 = None
    if baseline is not None:
        record = run_eval_episode(SchedulePolicy(baseline), profile,
                                  weather_seed, weather=weather)
        baseline_rf1 = record.rf["RF1"]
    return NoiseReport(
        profile_name=profile.name,
        policy_label=policy.label,
        runs=runs,
        weather_seed=weather_seed,
        rows=tuple(rows),
        baseline_rf1=baseline_rf1,
    )


__all__ = [
    "BaselineSchedule",
    "florida_baseline",
    "zaragoza_baseline",
    "baseline_for",
    "SchedulePolicy",
    "GreedyPolicy",
    "MaskedGreedyPolicy",
    "MaskedEnv",
    "EpisodeRecord",
    "run_eval_episode",
    "EvalRow",
    "EvalReport",
    "evaluate_policy",
    "evaluate_policies",
    "ablate_separate",
    "ArchitectureRow",
    "ablate_architecture",
    "NoiseCase",
    "default_noise_table",
    "NoiseRow",
    "NoiseReport",
    "noise_robustness",
]
