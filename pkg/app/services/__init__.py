from app.services.scenarios import (
    builtin_scenarios, scenario_summaries, get_scenario,
    build_transversal, build_measure, build_cycle, ahlfors_ratios
)
from app.services.runs import (
    parse_config, parse_config_text, validate_config, resolve_config,
    run, write_reports, create_run_record, get_runs, get_run_by_id
)
from app.services.cohomology import (
    pn_verdict, kahler_verdict, surface_leaf_verdict, hirz_classify,
    rank1_decompose, torus_certificate, directedness_residual
)
