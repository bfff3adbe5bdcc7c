import pytest

from ampsizer.errors import RoleUnassigned
from ampsizer.metrics import active_area, fom_l, fom_s, geometry_from_params, soo_constraints
from ampsizer.metrics import constraint_violation, worst_case
from ampsizer.sim import (
    CornerModel,
    SurrogateBackend,
    SurrogateConfig,
    corner_modifiers,
    nominal_metrics,
    surrogate_eval,
    surrogate_sweep,
    sweep,
)
from ampsizer.space import Process, PvtCorner, corner_grid, experiment_corners, get_node

NOMINAL = PvtCorner(Process.TT, 1.2, 27.0)

# Nominal metrics at the reference deck with a 100 pF load, pinned so that any
# change to the model shows up as a version bump rather than silent drift.
PINNED = {
    "gain_db": 121.68716082653162,
    "sr_v_per_us": 0.1466658393079885,
    "gbw_mhz": 0.21324379082888434,
    "vos_mv": 0.5188315076018195,
    "ts_us": 17.274407340679232,
    "vn_mvrms": 0.5760417196611916,
    "cmrr_db": -83.44644263727717,
    "tc_ppm": 78.10913493469347,
    "power_mw": 0.08852142857142857,
    "psrr_db": -84.60628157683091,
    "area_um2": 96126.05,
    "pm_deg": 27.764677501111283,
    "foms": 240.89510785155983,
    "foml": 165.68399502233834,
}

# A sized design that meets every constraint at all four experiment corners.
WITNESS = {
    "MOSFET_10_1_L_gm2_PMOS": 0.46, "MOSFET_10_1_M_gm2_PMOS": 24.0,
    "MOSFET_10_1_W_gm2_PMOS": 8.22, "MOSFET_23_1_L_gm3_NMOS": 0.244,
    "MOSFET_23_1_M_gm3_NMOS": 92.0, "MOSFET_23_1_W_gm3_NMOS": 6.54,
    "MOSFET_8_2_L_gm1_PMOS": 0.849, "MOSFET_8_2_M_gm1_PMOS": 3.0,
    "MOSFET_8_2_W_gm1_PMOS": 9.69, "MOSFET_0_8_L_BIASCM_PMOS": 0.478,
    "MOSFET_0_8_M_BIASCM_PMOS": 7.0, "MOSFET_0_8_W_BIASCM_PMOS": 6.09,
    "MOSFET_17_7_L_BIASCM_NMOS": 0.876, "MOSFET_17_7_M_BIASCM_NMOS": 81.0,
    "MOSFET_17_7_W_BIASCM_NMOS": 3.25, "MOSFET_21_2_L_LOAD2_NMOS": 0.554,
    "MOSFET_21_2_M_LOAD2_NMOS": 24.0, "MOSFET_21_2_W_LOAD2_NMOS": 5.06,
    "CAPACITOR_0": 1.7e-12, "CAPACITOR_1": 1.02e-12, "CURRENT_0_BIAS": 3.72e-06,
    "RESISTOR_0": 121000.0,
}


@pytest.fixture(scope="module")
def ref_point(reference_tb):
    return {p.name: p.value for p in reference_tb.params}


@pytest.fixture(scope="module")
def cfg(ref_point):
    return SurrogateConfig.for_names(ref_point)


def test_pinned_nominal_vector(ref_point, cfg):
    got = nominal_metrics(ref_point, cfg, 100e-12)
    assert set(got) == set(PINNED)
    for k, v in PINNED.items():
        assert got[k] == pytest.approx(v, rel=1e-12), k


def test_power_matches_hand_mirror_arithmetic(ref_point, cfg):
    # strength s = W/L * M * parallel; currents mirror the 5 uA reference
    s = {"gm1": 0.5 * 37 * 2, "gm2": 0.5 * 38 * 1, "gm3": 0.5 * 40 * 1,
         "bias_p": 0.5 * 40 * 8, "bias_n": 0.5 * 10 * 7}
    ib = 5e-6
    i1 = 4 * ib * s["gm1"] / s["bias_p"]
    i2 = 4 * ib * s["gm2"] / s["bias_p"]
    i3 = 20 * ib * s["gm3"] / s["bias_n"]
    power_mw = 1.2 * (ib + 2 * i1 + i2 + i3) * 1e3
    assert nominal_metrics(ref_point, cfg, 100e-12)["power_mw"] == pytest.approx(power_mw, rel=1e-12)


def test_area_is_the_shared_area_function(ref_point, cfg):
    got = nominal_metrics(ref_point, cfg)["area_um2"]
    assert got == active_area(geometry_from_params(ref_point))


def test_composite_figures_follow_their_parts(ref_point, cfg):
    for corner in corner_grid(get_node("n130"))[::7]:
        mv = surrogate_eval(ref_point, corner, cfg, 100e-12)
        assert mv["foms"] == pytest.approx(fom_s(mv["gbw_mhz"], 100.0, mv["power_mw"]), rel=1e-12)
        assert mv["foml"] == pytest.approx(fom_l(mv["sr_v_per_us"], 100.0, mv["power_mw"]), rel=1e-12)


def test_nominal_corner_has_unit_modifiers():
    mods = corner_modifiers(NOMINAL)
    assert all(v == 1.0 for v in mods.values())


def test_corner_modifier_is_product_of_factors():
    model = CornerModel()
    c = PvtCorner(Process.SS, 1.08, -40.0)
    expect = 1.10 * (1 + (-0.3) * (0.9 - 1)) * (1 + 0.12 * (-67) / 100)
    assert model.modifier("ts_us", c) == pytest.approx(expect, rel=1e-14)


def test_corner_result_is_nominal_times_modifier(ref_point, cfg):
    nom = nominal_metrics(ref_point, cfg, 100e-12)
    for corner in experiment_corners():
        mv = surrogate_eval(ref_point, corner, cfg, 100e-12)
        mods = corner_modifiers(corner)
        for k in nom:
            assert mv[k] == pytest.approx(nom[k] * mods[k], rel=1e-12)


def test_sweep_shares_nominal(ref_point, cfg):
    corners = experiment_corners()
    many = surrogate_sweep(ref_point, corners, cfg, 100e-12)
    one = [surrogate_eval(ref_point, c, cfg, 100e-12) for c in corners]
    assert [m.values for m in many] == [m.values for m in one]


def test_second_order_smooth(ref_point, cfg):
    # second differences shrink 4x when the step halves for every metric
    names = ["MOSFET_8_2_W_gm1_PMOS", "CAPACITOR_0", "CURRENT_0_BIAS", "RESISTOR_0"]
    for name in names:
        x0 = ref_point[name]

        def f(x):
            return nominal_metrics({**ref_point, name: x}, cfg, 100e-12)

        base = f(x0)
        for h in (1e-3,):
            d1 = {k: f(x0 * (1 + h))[k] + f(x0 * (1 - h))[k] - 2 * base[k] for k in base}
            d2 = {k: f(x0 * (1 + h / 2))[k] + f(x0 * (1 - h / 2))[k] - 2 * base[k] for k in base}
            for k in base:
                if abs(d1[k]) < 1e-9 * max(abs(base[k]), 1e-30):
                    continue        # metric does not depend on this parameter
                assert d1[k] / d2[k] == pytest.approx(4.0, rel=0.05), (name, k)


def test_witness_is_feasible_at_experiment_corners(cfg):
    corners = experiment_corners()
    vecs = surrogate_sweep(WITNESS, corners, cfg, 100e-12)
    wc = worst_case(vecs)
    assert max(constraint_violation(wc, soo_constraints())) == 0.0
    assert wc["pm_deg"] == pytest.approx(45.0346, abs=1e-3)
    assert wc["foml"] + wc["foms"] == pytest.approx(2793.64, abs=0.01)


def test_reference_deck_is_infeasible(ref_point, cfg):
    wc = worst_case(surrogate_sweep(ref_point, experiment_corners(), cfg, 100e-12))
    assert max(constraint_violation(wc, soo_constraints())) > 0.0


def test_missing_role_rejected(ref_point):
    names = [n for n in ref_point if n != "RESISTOR_0"]
    with pytest.raises(RoleUnassigned, match="rz"):
        SurrogateConfig.for_names(names)


def test_unknown_device_rejected(ref_point):
    with pytest.raises(RoleUnassigned):
        SurrogateConfig.for_names(list(ref_point) + ["MOSFET_30_1_W_MYSTERY_NMOS"])
    with pytest.raises(RoleUnassigned):
        SurrogateConfig.for_names(list(ref_point) + ["vdd"])


def test_point_must_match_roles(ref_point, cfg):
    with pytest.raises(RoleUnassigned):
        nominal_metrics({k: v for k, v in ref_point.items() if k != "CAPACITOR_1"}, cfg)
    with pytest.raises(RoleUnassigned):
        nominal_metrics({**ref_point, "extra": 1.0}, cfg)


def test_load_cap_changes_output_pole(ref_point, cfg):
    light = nominal_metrics(ref_point, cfg, 10e-12)
    heavy = nominal_metrics(ref_point, cfg, 100e-12)
    assert heavy["pm_deg"] < light["pm_deg"]
    assert heavy["gain_db"] == light["gain_db"]


def test_backend_sweep_matches_direct(loaded_tb, ref_point, cfg):
    be = SurrogateBackend(cfg)
    corners = experiment_corners()
    serial = sweep(be, loaded_tb, ref_point, corners)
    threaded = sweep(be, loaded_tb, ref_point, corners, workers=4)
    direct = surrogate_sweep(ref_point, corners, cfg, loaded_tb.load_cap)
    assert serial.vectors == threaded.vectors == direct
    assert serial.fe_cost == 1 and serial.corner_sims == 4


def test_sweep_failure_is_contained(loaded_tb, ref_point, cfg):
    res = sweep(SurrogateBackend(cfg), loaded_tb, {**ref_point, "CAPACITOR_0": -1.0},
                experiment_corners())
    assert not res.ok
    assert all(mv.values == {} for mv in res.vectors)
