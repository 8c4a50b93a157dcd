import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional

from attacks.brute_force_attack import run_brute_force
from attacks.dos_attack import run_dos
from attacks.mitm_attack import run_mitm
from attacks.scenarios import AttackKind, AttackOutcome, AttackScenario
from processors.errors import ScenarioError
from simulation.simnet import new_sim
from simulation.topology import Topology

logger = logging.getLogger(__name__)


def execute(topology: Topology, scenario: AttackScenario, seed: int = 0) -> AttackOutcome:
    """
    Selects and runs the correct executor for the scenario kind on a fresh
    simulator. This is the single entry point for the CLI, the pipeline and
    the dashboard.
    """
    logger.info(f"[ENGINE] Running scenario '{scenario.id}' ({scenario.kind}) against {scenario.target_tc}, seed={seed}")
    sim = new_sim(topology, seed)

    if scenario.kind == AttackKind.BRUTE_FORCE:
        return run_brute_force(sim, scenario.parameters, scenario)

    elif scenario.kind == AttackKind.MITM:
        return run_mitm(sim, scenario.parameters, scenario)

    elif scenario.kind == AttackKind.DOS_SYN_FLOOD:
        return run_dos(sim, scenario.parameters, scenario)

    else:
        raise ScenarioError(f"No executor for scenario kind '{scenario.kind}'")


def run_scenarios(topology: Topology, scenarios: Iterable[AttackScenario], seed: int = 0,
                  max_workers: Optional[int] = None) -> list[AttackOutcome]:
    """
    Runs every scenario on its own simulator. Outcomes come back in scenario
    order whatever the worker count.
    """
    scenarios = list(scenarios)
    if not scenarios:
        return []
    workers = max_workers or 1
    if workers == 1:
        return [execute(topology, s, seed) for s in scenarios]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: execute(topology, s, seed), scenarios))
