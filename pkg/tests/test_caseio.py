import numpy as np
import pytest

from gridmaint import caseio
from gridmaint.caseio import (CaseError, DegradationPriors, RunConfig,
                              load_config, load_demand, parse_case,
                              serialize_case, synth_demand)

from cases import CASE9, CASE_DANGLING, CASE_SINGLE_BUS


def test_parse_case9_counts():
    net = parse_case(CASE9)
    assert len(net.generators) == 3
    assert len(net.lines) == 9
    assert len(net.buses) == 9
    assert net.base_mva == 100.0


def test_parse_case9_values():
    net = parse_case(CASE9)
    g1 = net.generators[0]
    assert g1.p_max == 250.0 and g1.gen_cost == 20.0 and g1.noload_cost == 100.0
    assert g1.startup_cost == 1500.0
    # synthesized maintenance costs: pred = pmax * c * |S|, corr = 3x
    assert g1.maint_cost_pred == pytest.approx(250.0 * 20.0 * 24)
    assert g1.maint_cost_corr == pytest.approx(3 * g1.maint_cost_pred)
    line = net.lines[0]
    mean_pred = np.mean([g.maint_cost_pred for g in net.generators])
    assert line.maint_cost_pred == pytest.approx(0.1 * mean_pred)
    # auto-derived big-M covers B * (angle span)
    bix = net.bus_index()
    span = net.buses[bix[line.from_bus]].delta_max - net.buses[bix[line.to_bus]].delta_min
    assert line.big_m == pytest.approx(net.line_susceptance_mw(line) * span)


def test_single_bus_degenerate_ok():
    net = parse_case(CASE_SINGLE_BUS)
    assert len(net.buses) == 1 and len(net.lines) == 0 and len(net.generators) == 1


def test_dangling_branch_reference():
    with pytest.raises(CaseError, match="unknown bus"):
        parse_case(CASE_DANGLING)


def test_disconnected_graph_rejected():
    text = CASE_SINGLE_BUS.replace(
        "mpc.bus = [\n\t1	3	100	0	0	0	1	1	0	345	1	1.1	0.9;\n];",
        "mpc.bus = [\n\t1	3	100	0	0	0	1	1	0	345	1	1.1	0.9;\n"
        "\t2	1	50	0	0	0	1	1	0	345	1	1.1	0.9;\n];")
    with pytest.raises(CaseError, match="not connected"):
        parse_case(text)


def test_quadratic_gencost_rejected():
    text = CASE9.replace("2	1500	0	2	20	100;", "2	1500	0	3	0.1	20	100;") \
                .replace("2	2000	0	2	25	120;", "2	2000	0	3	0.2	25	120;") \
                .replace("2	3000	0	2	30	80;", "2	3000	0	3	0.3	30	80;")
    with pytest.raises(CaseError, match="degree 1"):
        parse_case(text)


def test_quadratic_gencost_with_zero_leading_term_ok():
    text = CASE9.replace("2	1500	0	2	20	100;", "2	1500	0	3	0	20	100;") \
                .replace("2	2000	0	2	25	120;", "2	2000	0	3	0	25	120;") \
                .replace("2	3000	0	2	30	80;", "2	3000	0	3	0	30	80;")
    net = parse_case(text)
    assert net.generators[0].gen_cost == 20.0


def test_round_trip():
    net = parse_case(CASE9)
    again = parse_case(serialize_case(net))
    assert again == net


def test_syntax_error_reports_line():
    bad = CASE_SINGLE_BUS.replace("1	3	100", "1	oops	100")
    with pytest.raises(CaseError, match="line "):
        parse_case(bad)


# -- demand ------------------------------------------------------------------

def _tiny_cfg(**kw):
    base = dict(horizon_days=2, subperiods=24, saa_nprime=50)
    base.update(kw)
    return RunConfig(**base)


def _demand_csv(buses, days, hours, value=50.0):
    rows = ["bus,t,s,mw"]
    for b in buses:
        for t in range(1, days + 1):
            for s in range(1, hours + 1):
                rows.append(f"{b},{t},{s},{value}")
    return "\n".join(rows)


def test_load_demand_complete():
    net = parse_case(CASE_SINGLE_BUS)
    cfg = _tiny_cfg()
    grid = load_demand(_demand_csv([1], 2, 24), net, cfg)
    assert grid.values.shape == (1, 2, 24)
    assert np.all(grid.values == 50.0)


def test_load_demand_duplicate_row():
    net = parse_case(CASE_SINGLE_BUS)
    cfg = _tiny_cfg()
    text = _demand_csv([1], 2, 24) + "\n1,1,1,50"
    with pytest.raises(CaseError, match="duplicate"):
        load_demand(text, net, cfg)


def test_load_demand_negative():
    net = parse_case(CASE_SINGLE_BUS)
    cfg = _tiny_cfg()
    text = _demand_csv([1], 2, 24).replace("1,2,24,50.0", "1,2,24,-5")
    with pytest.raises(CaseError, match="negative"):
        load_demand(text, net, cfg)


def test_load_demand_missing_cells():
    net = parse_case(CASE_SINGLE_BUS)
    cfg = _tiny_cfg()
    text = "\n".join(_demand_csv([1], 2, 24).splitlines()[:-1])
    with pytest.raises(CaseError, match="missing"):
        load_demand(text, net, cfg)


def test_demand_round_trip():
    net = parse_case(CASE_SINGLE_BUS)
    cfg = _tiny_cfg()
    grid = synth_demand(net, cfg)
    again = load_demand(caseio.dump_demand(grid), net, cfg)
    assert np.allclose(again.values, grid.values)


def test_synth_demand_flat_shape():
    net = parse_case(CASE_SINGLE_BUS)  # base demand 100 at the only bus
    cfg = _tiny_cfg()
    grid = synth_demand(net, cfg, shape=np.ones((2, 24)))
    assert np.all(grid.values == 100.0)


def test_synth_demand_homogeneous():
    net = parse_case(CASE9)
    cfg = _tiny_cfg()
    shape = caseio.default_weekly_shape(2, 24)
    g1 = synth_demand(net, cfg, shape)
    g2 = synth_demand(net, cfg, 2.0 * shape)
    assert np.allclose(g2.values, 2.0 * g1.values)


def test_synth_demand_seeded_repeatable():
    net = parse_case(CASE9)
    cfg = _tiny_cfg()
    g1 = synth_demand(net, cfg, seed=7, noise_sd=0.05)
    g2 = synth_demand(net, cfg, seed=7, noise_sd=0.05)
    assert np.array_equal(g1.values, g2.values)


def test_synth_demand_shape_mismatch():
    net = parse_case(CASE9)
    with pytest.raises(CaseError, match="shape"):
        synth_demand(net, _tiny_cfg(), shape=np.ones((3, 24)))


# -- config ------------------------------------------------------------------

def test_config_defaults_and_tbar():
    cfg = RunConfig()
    assert cfg.tbar == 8
    assert cfg.tau("gen") == (1, 2)


def test_config_json_round_trip():
    cfg = RunConfig(horizon_days=3, alpha=0.2, cut_family="optK")
    again = load_config(caseio.dump_config(cfg))
    assert again == cfg


@pytest.mark.parametrize("bad", [
    dict(alpha=0.0), dict(alpha=1.0), dict(rho_gen=0), dict(epsilon=0.0),
    dict(tau_pred_gen=2, tau_corr_gen=1), dict(cut_family="bogus"),
    dict(cut_family="optKT++", aggregation="single"), dict(chance_mode="x"),
    dict(significance=0.0), dict(significance=1.0), dict(threads=0),
    dict(pfail_gen=1.5),
])
def test_config_invariants(bad):
    with pytest.raises(CaseError):
        RunConfig(**bad)


def test_config_unknown_key():
    with pytest.raises(CaseError, match="unknown config"):
        load_config('{"no_such_option": 1}')


def test_config_priors_parsed():
    cfg = load_config('{"priors_gen": {"mu0": 10, "kappa0": 1, "mu1": 2, '
                      '"kappa1": 0.1, "sigma": 1, "threshold": 50}}')
    assert isinstance(cfg.priors_gen, DegradationPriors)
    assert cfg.priors_gen.mu0 == 10


def test_angle_slack_shortfall_is_reported_not_assumed(caplog):
    # a weak line whose angle span cannot carry its thermal rating is flagged
    import logging
    from cases import build_net
    with caplog.at_level(logging.WARNING, logger="gridmaint.caseio"):
        build_net(n_bus=2, demands=[0.0, 0.0], susceptance=0.05,
                  flow_limit=1000.0)
    assert any("big-M may be binding" in rec.message for rec in caplog.records)
