"""Device-model validation.

The analytic conductances are checked against central finite differences
of the current equation, and the piecewise regions against hand-evaluated
closed forms.
"""

import math
import random

import pytest

from pfdsim.devices import (
    DEFAULT_CONFIG,
    CornerSet,
    ModelConfig,
    MosfetParams,
    apply_corner,
    dump_config,
    load_config,
    mosfet_conductances,
    mosfet_current,
)

NM = MosfetParams(polarity="nmos", vth0=0.35, kprime=200e-6, lam=0.0, w=260e-9, l=100e-9)
PM = MosfetParams(polarity="pmos", vth0=-0.35, kprime=200e-6, lam=0.0, w=260e-9, l=100e-9)


def random_params(rng: random.Random) -> MosfetParams:
    polarity = rng.choice(["nmos", "pmos"])
    vth = rng.uniform(0.1, 0.6)
    return MosfetParams(
        polarity=polarity,
        vth0=vth if polarity == "nmos" else -vth,
        kprime=rng.uniform(20e-6, 500e-6),
        lam=rng.uniform(0.0, 0.3),
        w=rng.uniform(100e-9, 2e-6),
        l=rng.uniform(50e-9, 1e-6),
    )


class TestCurrent:
    def test_cutoff_region_zero_current(self):
        for vds in (0.0, 0.1, 0.6, 1.2):
            assert mosfet_current(NM, 0.2, vds) == 0.0

    def test_saturation_hand_value(self):
        # 0.5 * 200u * 2.6 * 0.85^2
        i = mosfet_current(NM, 1.2, 1.2)
        assert i == pytest.approx(187.85e-6, rel=1e-12)

    def test_triode_hand_value(self):
        # 200u * 2.6 * (0.85*0.1 - 0.5*0.01)
        i = mosfet_current(NM, 1.2, 0.1)
        assert i == pytest.approx(41.6e-6, rel=1e-12)

    def test_channel_length_modulation_scales_saturation(self):
        p = MosfetParams(polarity="nmos", vth0=0.35, kprime=200e-6, lam=0.1, w=260e-9, l=100e-9)
        assert mosfet_current(p, 1.2, 1.2) == pytest.approx(187.85e-6 * 1.12, rel=1e-12)

    def test_continuity_at_triode_saturation_boundary(self):
        rng = random.Random(1234)
        for _ in range(1000):
            p = random_params(rng)
            sign = 1.0 if p.polarity == "nmos" else -1.0
            vgs = sign * (abs(p.vth0) + rng.uniform(0.05, 1.0))
            vov = sign * vgs - abs(p.vth0)
            vds = sign * vov
            below = mosfet_current(p, vgs, vds * (1 - 1e-12))
            at = mosfet_current(p, vgs, vds)
            above = mosfet_current(p, vgs, vds * (1 + 1e-12))
            assert abs(at - below) <= 1e-15
            assert abs(at - above) <= 1e-15

    def test_polarity_antisymmetry(self):
        rng = random.Random(99)
        for _ in range(200):
            vth = rng.uniform(0.1, 0.6)
            kw = dict(kprime=rng.uniform(20e-6, 500e-6), lam=rng.uniform(0, 0.3),
                      w=rng.uniform(0.1e-6, 1e-6), l=rng.uniform(0.05e-6, 0.5e-6))
            n = MosfetParams(polarity="nmos", vth0=vth, **kw)
            p = MosfetParams(polarity="pmos", vth0=-vth, **kw)
            vgs = rng.uniform(-1.5, 1.5)
            vds = rng.uniform(-1.5, 1.5)
            assert mosfet_current(p, vgs, vds) == -mosfet_current(n, -vgs, -vds)

    def test_reversed_channel_continuous_at_vds_zero(self):
        i_neg = mosfet_current(NM, 1.0, -1e-9)
        i_pos = mosfet_current(NM, 1.0, 1e-9)
        assert i_neg < 0 < i_pos
        # odd symmetry through vds = 0 up to the O(h^2) triode curvature
        assert i_neg == pytest.approx(-i_pos, rel=1e-6)

    def test_monotone_in_vgs_and_width_in_saturation(self):
        rng = random.Random(7)
        for _ in range(200):
            p = random_params(rng)
            sign = 1.0 if p.polarity == "nmos" else -1.0
            vds = sign * 1.5
            v1 = abs(p.vth0) + rng.uniform(0.05, 0.5)
            v2 = v1 + rng.uniform(0.01, 0.5)
            i1 = abs(mosfet_current(p, sign * v1, vds))
            i2 = abs(mosfet_current(p, sign * v2, vds))
            assert i2 > i1
            wider = MosfetParams(polarity=p.polarity, vth0=p.vth0, kprime=p.kprime,
                                 lam=p.lam, w=p.w * 1.5, l=p.l)
            assert abs(mosfet_current(wider, sign * v1, vds)) > i1


class TestConductances:
    def test_cutoff_point(self):
        assert mosfet_conductances(NM, 0.2, 0.8) == (0.0, 0.0)

    def test_saturation_gm_hand_value(self):
        gm, gds = mosfet_conductances(NM, 1.2, 1.2)
        assert gm == pytest.approx(442e-6, rel=1e-12)
        assert gds == 0.0  # lam = 0

    def test_matches_finite_differences(self):
        """1000 random evaluation points, 1 uV central differences."""
        rng = random.Random(20240811)
        h = 1e-6
        checked = 0
        while checked < 1000:
            p = random_params(rng)
            vgs = rng.uniform(-1.5, 1.5)
            vds = rng.uniform(-1.5, 1.5)
            # keep clear of the region kinks where the FD straddles a corner
            vov = (1 if p.polarity == "nmos" else -1) * vgs - abs(p.vth0)
            sds = (1 if p.polarity == "nmos" else -1) * vds
            if min(abs(vov), abs(sds - vov), abs(sds)) < 10 * h:
                continue
            gm, gds = mosfet_conductances(p, vgs, vds)
            fd_gm = (mosfet_current(p, vgs + h, vds) - mosfet_current(p, vgs - h, vds)) / (2 * h)
            fd_gds = (mosfet_current(p, vgs, vds + h) - mosfet_current(p, vgs, vds - h)) / (2 * h)
            scale = max(abs(fd_gm), abs(fd_gds), 1e-9)
            assert abs(gm - fd_gm) <= 1e-4 * scale, (p, vgs, vds)
            assert abs(gds - fd_gds) <= 1e-4 * scale, (p, vgs, vds)
            checked += 1


class TestCorners:
    def test_identity_corner(self):
        tt = CornerSet(name="TT")
        assert apply_corner(NM, tt) == NM
        assert apply_corner(PM, tt) == PM

    def test_ff_scales_nmos_vth(self):
        ff = CornerSet(name="FF", vth_scale_n=0.9, vth_scale_p=0.9,
                       k_scale_n=1.15, k_scale_p=1.15)
        out = apply_corner(NM, ff)
        assert out.vth0 == pytest.approx(0.315, rel=1e-12)
        assert out.kprime == pytest.approx(230e-6, rel=1e-12)

    def test_ss_preserves_pmos_sign(self):
        ss = CornerSet(name="SS", vth_scale_n=1.1, vth_scale_p=1.1,
                       k_scale_n=0.85, k_scale_p=0.85)
        out = apply_corner(PM, ss)
        assert out.vth0 == pytest.approx(-0.385, rel=1e-12)

    def test_mixed_corner_touches_one_polarity(self):
        fs = DEFAULT_CONFIG.corner("FS")  # fast nmos, slow pmos
        assert fs.vth_scale_n == 0.9 and fs.k_scale_n == 1.15
        assert fs.vth_scale_p == 1.1 and fs.k_scale_p == 0.85
        out = apply_corner(PM, fs)
        assert out.vth0 == pytest.approx(-0.385, rel=1e-12)

    def test_geometry_untouched(self):
        out = apply_corner(NM, DEFAULT_CONFIG.corner("SS"))
        assert (out.w, out.l, out.lam, out.cgs, out.cgd) == (NM.w, NM.l, NM.lam, NM.cgs, NM.cgd)


class TestParamValidation:
    def test_rejects_nonpositive_geometry(self):
        with pytest.raises(ValueError):
            MosfetParams(polarity="nmos", vth0=0.35, kprime=1e-4, lam=0.1, w=0.0, l=1e-7)

    def test_rejects_wrong_vth_sign(self):
        with pytest.raises(ValueError):
            MosfetParams(polarity="pmos", vth0=0.35, kprime=1e-4, lam=0.1, w=1e-7, l=1e-7)
        with pytest.raises(ValueError):
            MosfetParams(polarity="nmos", vth0=-0.35, kprime=1e-4, lam=0.1, w=1e-7, l=1e-7)

    def test_rejects_bad_corner_scale(self):
        with pytest.raises(ValueError):
            CornerSet(name="FF", vth_scale_n=0.0)


class TestConfigFile:
    def test_defaults(self):
        cfg = ModelConfig()
        assert cfg.vdd == 1.2
        assert cfg.nmos.vth0 == 0.35
        assert cfg.pmos.kprime == 80e-6

    def test_round_trip(self, tmp_path):
        cfg = ModelConfig()
        path = tmp_path / "cal.params"
        path.write_text(dump_config(cfg))
        assert load_config(path) == cfg

    def test_partial_override(self, tmp_path):
        path = tmp_path / "cal.params"
        path.write_text("nmos.kprime = 400e-6\nvdd = 1.0  # lowered supply\n")
        cfg = load_config(path)
        assert cfg.nmos.kprime == 400e-6
        assert cfg.vdd == 1.0
        assert cfg.pmos == DEFAULT_CONFIG.pmos

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cal.params"
        path.write_text("nmos.body_effect = 0.2\n")
        with pytest.raises(ValueError, match="unknown key"):
            load_config(path)

    def test_bad_number_rejected(self, tmp_path):
        path = tmp_path / "cal.params"
        path.write_text("vdd = fast\n")
        with pytest.raises(ValueError, match="bad number"):
            load_config(path)

    def test_corner_table_from_scales(self):
        corners = DEFAULT_CONFIG.corners()
        assert set(corners) == {"TT", "FF", "FS", "SF", "SS"}
        tt = corners["TT"]
        assert (tt.vth_scale_n, tt.vth_scale_p, tt.k_scale_n, tt.k_scale_p) == (1, 1, 1, 1)
        # fast letter -> lower vth, higher kprime
        assert corners["FF"].vth_scale_n < 1 < corners["FF"].k_scale_n
        assert corners["SS"].vth_scale_n > 1 > corners["SS"].k_scale_n


def test_current_formula_cross_check_against_direct_math():
    """Independent evaluation of the square law, written out longhand."""
    rng = random.Random(5)
    for _ in range(300):
        p = random_params(rng)
        sign = 1.0 if p.polarity == "nmos" else -1.0
        vgs = rng.uniform(-2, 2)
        vds = sign * rng.uniform(0, 2)  # forward region only; reversal covered elsewhere
        beta = p.kprime * p.w / p.l
        vov = sign * vgs - abs(p.vth0)
        vds_c = sign * vds
        if vov <= 0:
            expect = 0.0
        elif vds_c < vov:
            expect = beta * (vov * vds_c - 0.5 * vds_c**2) * (1 + p.lam * vds_c)
        else:
            expect = 0.5 * beta * vov**2 * (1 + p.lam * vds_c)
        assert mosfet_current(p, vgs, vds) == pytest.approx(sign * expect, abs=1e-18)


def test_conductance_units_scale_with_beta():
    gm1, _ = mosfet_conductances(NM, 1.2, 1.2)
    wide = MosfetParams(polarity="nmos", vth0=0.35, kprime=200e-6, lam=0.0,
                        w=520e-9, l=100e-9)
    gm2, _ = mosfet_conductances(wide, 1.2, 1.2)
    assert gm2 == pytest.approx(2 * gm1, rel=1e-12)


def test_reversed_channel_conductances_match_fd():
    p = NM
    vgs, vds = 0.9, -0.4
    h = 1e-6
    gm, gds = mosfet_conductances(p, vgs, vds)
    fd_gm = (mosfet_current(p, vgs + h, vds) - mosfet_current(p, vgs - h, vds)) / (2 * h)
    fd_gds = (mosfet_current(p, vgs, vds + h) - mosfet_current(p, vgs, vds - h)) / (2 * h)
    assert gm == pytest.approx(fd_gm, rel=1e-4)
    assert gds == pytest.approx(fd_gds, rel=1e-4)
    assert math.copysign(1.0, mosfet_current(p, vgs, vds)) == -1.0
