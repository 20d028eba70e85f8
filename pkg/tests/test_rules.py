import itertools
from types import SimpleNamespace

import numpy as np
import pytest

import specshape as ss
from specshape.features import CurvatureSeries, FeatureSet
from specshape.rules import (And, Atom, CompiledRuleSet, Or, Rule, RuleBindError,
                             RuleSet, RuleSyntaxError, nearest_band)

LISTING_PE = ("RULE PE { CV[1139] < -0.1 AND CV[1253] < -0.1 AND CV[1357] < -0.1 "
              "AND CV[1215] > 0.1 AND CV[1394] > 0.1 }")

LISTING_PS = ("RULE PS { CV[1108] < -0.1 AND CV[1174] < -0.1 AND CV[1608] < -0.1 "
              "AND CV[1143] > 0.1 AND CV[1204] > 0.1 AND CV[1677] > 0.1 }")


# ---------------------------------------------------------------------------
# Random AST generation for round-trip properties


def random_expr(rng, depth=0):
    roll = rng.random()
    if depth >= 3 or roll < 0.45:
        feature = rng.choice(["CV", "CRRV", "RV"])
        wavelength = float(np.round(rng.uniform(400, 1700), 3))
        op = rng.choice(["<", "<=", ">", ">="])
        threshold = float(np.round(rng.uniform(-2, 2), 6))
        return Atom(str(feature), wavelength, str(op), threshold)
    n = int(rng.integers(2, 4))
    items = tuple(random_expr(rng, depth + 1) for _ in range(n))
    return And(items) if roll < 0.75 else Or(items)


def random_ruleset(rng):
    n = int(rng.integers(1, 5))
    names = []
    while len(names) < n:
        name = "R" + "".join(rng.choice(list("abcXYZ_-0123456789"), size=5))
        if name not in names:
            names.append(name)
    return RuleSet(tuple(Rule(names[i], random_expr(rng)) for i in range(n)))


# ---------------------------------------------------------------------------


class TestParse:
    def test_listing_pe_rule(self):
        rs = ss.parse_rules(LISTING_PE)
        assert len(rs) == 1
        rule = rs.rules[0]
        assert rule.name == "PE"
        atoms = list(rule.atoms())
        assert len(atoms) == 5
        assert isinstance(rule.expr, And)
        assert atoms[0] == Atom("CV", 1139.0, "<", -0.1)
        assert atoms[3] == Atom("CV", 1215.0, ">", 0.1)

    def test_empty_rule_is_distinct_error(self):
        with pytest.raises(RuleSyntaxError) as err:
            ss.parse_rules("RULE X { }")
        assert err.value.diagnostic.kind == "empty-rule"
        assert err.value.diagnostic.line == 1

    def test_duplicate_class_name(self):
        text = "RULE A { CV[1000] < 0 }\nRULE A { CV[1100] > 0 }"
        with pytest.raises(RuleSyntaxError) as err:
            ss.parse_rules(text)
        assert err.value.diagnostic.kind == "duplicate-class"
        assert err.value.diagnostic.line == 2

    def test_lexical_error_position(self):
        with pytest.raises(RuleSyntaxError) as err:
            ss.parse_rules("RULE A { CV[1000] < 0.1 @ }")
        d = err.value.diagnostic
        assert d.kind == "lexical" and d.line == 1 and d.col == 25

    def test_syntax_error_position(self):
        with pytest.raises(RuleSyntaxError) as err:
            ss.parse_rules("RULE A {\n  CV[1000 < 0.1\n}")
        d = err.value.diagnostic
        assert d.kind == "syntax" and d.line == 2

    def test_comments_and_whitespace(self):
        text = """
        # leading comment
        RULE PE {   # trailing comment
            CV[1139] < -0.1
        }
        """
        rs = ss.parse_rules(text)
        assert rs.rules[0].name == "PE"

    def test_hyphenated_class_name(self):
        rs = ss.parse_rules("RULE PF-black { CRRV[1429] < 0.6 }")
        assert rs.rules[0].name == "PF-black"

    def test_mixed_comparators(self):
        rs = ss.parse_rules("RULE ABS { CV[1339] > -0.1 AND CV[1104] <= -0.1 AND RV[950] >= 0.2 }")
        ops = [a.op for a in rs.rules[0].atoms()]
        assert ops == [">", "<=", ">="]

    def test_or_and_parentheses(self):
        rs = ss.parse_rules("RULE X { (CV[1000] < 0 OR CV[1100] < 0) AND RV[1200] > 0.5 }")
        expr = rs.rules[0].expr
        assert isinstance(expr, And) and isinstance(expr.items[0], Or)

    def test_and_binds_tighter_than_or(self):
        rs = ss.parse_rules("RULE X { CV[1] < 0 AND CV[2] < 0 OR CV[3] > 0 }")
        expr = rs.rules[0].expr
        assert isinstance(expr, Or)
        assert isinstance(expr.items[0], And) and isinstance(expr.items[1], Atom)

    def test_rule_order_preserved(self):
        rs = ss.parse_rules("RULE B { CV[1] < 0 }\nRULE A { CV[2] < 0 }")
        assert rs.class_names() == ("B", "A")

    def test_wavelength_must_be_positive(self):
        with pytest.raises(RuleSyntaxError, match="positive"):
            ss.parse_rules("RULE X { CV[-5] < 0 }")

    def test_keyword_not_a_class_name(self):
        with pytest.raises(RuleSyntaxError, match="class name"):
            ss.parse_rules("RULE AND { CV[1] < 0 }")

    def test_empty_text_fails(self):
        with pytest.raises(RuleSyntaxError, match="no rules"):
            ss.parse_rules("  # only a comment\n")

    def test_unclosed_brace(self):
        with pytest.raises(RuleSyntaxError, match="'}'"):
            ss.parse_rules("RULE X { CV[1] < 0 ")


class TestPrinter:
    def test_canonical_form(self):
        rs = ss.parse_rules("RULE PE{CV[1139]<-0.1 AND CV[1215]>0.1}")
        assert ss.format_rules(rs) == "RULE PE { CV[1139] < -0.1 AND CV[1215] > 0.1 }\n"

    def test_parentheses_reinserted_only_where_needed(self):
        text = "RULE X { (CV[1] < 0 OR CV[2] < 0) AND CV[3] > 0 }"
        rs = ss.parse_rules(text)
        printed = ss.format_rules(rs)
        assert printed == "RULE X { (CV[1] < 0 OR CV[2] < 0) AND CV[3] > 0 }\n"
        assert ss.parse_rules(printed) == rs

    def test_round_trip_200_random_asts(self, rng):
        for _ in range(200):
            rs = random_ruleset(rng)
            assert ss.parse_rules(ss.format_rules(rs)) == rs

    def test_printer_is_idempotent(self, rng):
        for _ in range(50):
            rs = random_ruleset(rng)
            once = ss.format_rules(rs)
            assert ss.format_rules(ss.parse_rules(once)) == once


class TestBind:
    def test_exact_band(self, fx17_axis):
        rs = ss.parse_rules("RULE X { CV[900] < 0 }")
        crs = ss.bind(rs, fx17_axis)
        atom = next(crs.rules[0].atoms())
        assert atom.band == 0 and atom.bound_wavelength == 900.0

    def test_nearest_neighbor_by_hand(self):
        axis = np.array([995.0, 1003.0])
        rs = ss.parse_rules("RULE X { CV[1000] < 0 }")
        crs = ss.bind(rs, axis, tolerance_nm=10.0)
        atom = next(crs.rules[0].atoms())
        assert atom.band == 1 and atom.bound_wavelength == 1003.0  # distance 3 < 5

    def test_tie_goes_to_lower_band(self):
        axis = np.array([995.0, 1005.0])
        assert nearest_band(axis, 1000.0) == 0

    def test_out_of_tolerance_names_atom(self):
        axis = np.linspace(400.0, 700.0, 100)
        rs = ss.parse_rules("RULE VISIBLE { CV[1139] < -0.1 }")
        with pytest.raises(RuleBindError, match=r"VISIBLE.*CV\[1139\]"):
            ss.bind(rs, axis, tolerance_nm=10.0)

    def test_empty_axis(self):
        rs = ss.parse_rules("RULE X { CV[1000] < 0 }")
        with pytest.raises(RuleBindError, match="empty"):
            ss.bind(rs, np.array([]))

    def test_records_provenance(self, fx17_axis):
        rs = ss.parse_rules("RULE X { CV[1000] < 0 }")
        crs = ss.bind(rs, fx17_axis, tolerance_nm=5.0,
                      continuum_mode="difference", x_scale=2.0)
        assert crs.continuum_mode == "difference"
        assert crs.x_scale == 2.0
        assert crs.tolerance_nm == 5.0
        assert crs.axis_fingerprint == ss.axis_fingerprint(fx17_axis)

    def test_bound_wavelength_within_tolerance(self, fx17_axis, rng):
        atoms = " AND ".join(
            f"CV[{w:.0f}] < 0" for w in rng.uniform(905, 1695, 12))
        crs = ss.bind(ss.parse_rules(f"RULE X {{ {atoms} }}"), fx17_axis, 10.0)
        for atom in crs.rules[0].atoms():
            assert abs(atom.bound_wavelength - atom.wavelength) <= 10.0


class TestBuiltinRules:
    def test_nine_material_rules_with_exact_atom_counts(self):
        rs = ss.builtin_rules()
        expected = {"PA": 8, "PE": 5, "PF-black": 3, "PMMA": 6, "PVC": 5,
                    "PS": 6, "UP": 3, "PP": 6, "ABS": 8}
        assert rs.class_names() == tuple(expected)
        for rule in rs.rules:
            assert sum(1 for _ in rule.atoms()) == expected[rule.name]

    def test_pf_black_atom_features(self):
        rs = ss.builtin_rules()
        pf = next(r for r in rs.rules if r.name == "PF-black")
        features = sorted(a.feature for a in pf.atoms())
        assert features == ["CRRV", "CV", "CV"]
        crrv = next(a for a in pf.atoms() if a.feature == "CRRV")
        assert crrv == Atom("CRRV", 1429.0, "<", 0.6)

    def test_binds_cleanly_on_synthetic_fx17_axis(self, fx17_axis):
        crs = ss.bind(ss.builtin_rules(include_pcb=True), fx17_axis)
        assert len(crs) == 10

    def test_pcb_placeholder_makes_ten_classes(self):
        rs = ss.builtin_rules(include_pcb=True)
        assert len(rs) == 10 and rs.class_names()[-1] == "PCB"

    def test_pcb_placeholder_never_fires_on_reflectance(self, fx17_axis, rng):
        crs = ss.bind(ss.builtin_rules(include_pcb=True), fx17_axis)
        pcb = crs.rules[-1]
        raw = SimpleNamespace(wavelengths=fx17_axis, values=rng.uniform(0, 1.5, 229))
        fs = _feature_set(np.zeros(229))
        cr = SimpleNamespace(wavelengths=fx17_axis, values=np.ones(229))
        matches = ss.evaluate(crs, fs, cr, raw, diagnostic=True)
        assert pcb.class_id not in matches

    def test_abs_mixed_comparator_transcribed(self):
        rs = ss.builtin_rules()
        abs_rule = next(r for r in rs.rules if r.name == "ABS")
        assert Atom("CV", 1339.0, ">", -0.1) in list(abs_rule.atoms())


def _feature_set(kappa) -> FeatureSet:
    series = CurvatureSeries(kappa=kappa, first=np.zeros(len(kappa)),
                             second=np.asarray(kappa))
    return FeatureSet(curvature=series, points=(), threshold=0.1)


def _pixel(fx17_axis, kappa=None, cr=None, raw=None):
    n = fx17_axis.size
    kappa = np.zeros(n) if kappa is None else kappa
    cr = np.ones(n) if cr is None else cr
    raw = np.full(n, 0.5) if raw is None else raw
    return (_feature_set(kappa),
            SimpleNamespace(wavelengths=fx17_axis, values=cr),
            SimpleNamespace(wavelengths=fx17_axis, values=raw))


class TestEvaluate:
    def test_listing_ps_thresholds(self, fx17_axis):
        crs = ss.bind(ss.builtin_rules(), fx17_axis)
        ps = next(r for r in crs.rules if r.name == "PS")
        kappa = np.zeros(229)
        for atom in ps.atoms():
            kappa[atom.band] = -0.15 if atom.op == "<" else 0.15
        fs, cr, raw = _pixel(fx17_axis, kappa=kappa)
        assert ss.evaluate(crs, fs, cr, raw) == ps.class_id

    def test_empty_ruleset_returns_none(self, fx17_axis):
        crs = ss.bind(RuleSet(()), fx17_axis)
        fs, cr, raw = _pixel(fx17_axis)
        assert ss.evaluate(crs, fs, cr, raw) is None

    def test_first_match_wins_and_diagnostic_lists_all(self, fx17_axis):
        text = "RULE A { RV[1000] > 0.4 }\nRULE B { RV[1000] > 0.3 }"
        crs = ss.bind(ss.parse_rules(text), fx17_axis)
        fs, cr, raw = _pixel(fx17_axis)

        # brute-force truth table: raw value 0.5 satisfies both expressions
        both = [cid for cid, thr in ((1, 0.4), (2, 0.3)) if 0.5 > thr]
        assert ss.evaluate(crs, fs, cr, raw) == 1
        assert ss.evaluate(crs, fs, cr, raw, diagnostic=True) == both

    def test_crrv_and_rv_atoms_read_their_series(self, fx17_axis):
        text = "RULE D { CRRV[1429] < 0.6 }\nRULE E { RV[1300] >= 0.7 }"
        crs = ss.bind(ss.parse_rules(text), fx17_axis)
        band_1429 = next(crs.rules[0].atoms()).band
        cr = np.ones(229)
        cr[band_1429] = 0.5
        fs, cr_s, raw = _pixel(fx17_axis, cr=cr)
        assert ss.evaluate(crs, fs, cr_s, raw) == 1

        fs, cr_s, raw = _pixel(fx17_axis, raw=np.full(229, 0.8))
        assert ss.evaluate(crs, fs, cr_s, raw) == 2

    def test_or_expression(self, fx17_axis):
        crs = ss.bind(ss.parse_rules("RULE X { RV[1000] > 0.9 OR RV[1600] > 0.4 }"), fx17_axis)
        fs, cr, raw = _pixel(fx17_axis)
        assert ss.evaluate(crs, fs, cr, raw) == 1

    def test_axis_fingerprint_mismatch(self, fx17_axis):
        crs = ss.bind(ss.parse_rules("RULE X { CV[1000] < 0 }"), fx17_axis)
        other_axis = fx17_axis + 5.0
        fs, cr, raw = _pixel(other_axis)
        with pytest.raises(ValueError, match="different wavelength axis"):
            ss.evaluate(crs, fs, cr, raw)

    def test_and_permutation_invariance(self, fx17_axis, rng):
        atoms = ["CV[1000] < 0.05", "CRRV[1200] > 0.2", "RV[1400] < 0.9", "CV[1600] > -0.3"]
        results = []
        for perm in itertools.permutations(atoms):
            crs = ss.bind(ss.parse_rules(f"RULE X {{ {' AND '.join(perm)} }}"), fx17_axis)
            fs, cr, raw = _pixel(fx17_axis, kappa=rng.normal(0, 0.01, 229))
            results.append(ss.evaluate(crs, fs, cr, raw))
        assert len(set(results)) == 1

    def test_first_match_monotonicity_when_appending(self, fx17_axis, rng):
        base = "RULE A { RV[1000] > 0.45 }\nRULE B { RV[1200] > 0.45 }"
        extended = base + "\nRULE C { RV[1400] >= 0 }"
        crs_base = ss.bind(ss.parse_rules(base), fx17_axis)
        crs_ext = ss.bind(ss.parse_rules(extended), fx17_axis)
        for _ in range(50):
            fs, cr, raw = _pixel(fx17_axis, raw=rng.uniform(0, 1, 229))
            before = ss.evaluate(crs_base, fs, cr, raw)
            after = ss.evaluate(crs_ext, fs, cr, raw)
            if before is not None:
                assert after == before

    def test_evaluation_touches_at_most_n_bands(self, fx17_axis):
        class CountingArray:
            def __init__(self, data):
                self.data = np.asarray(data)
                self.reads = 0

            def __getitem__(self, idx):
                self.reads += 1
                return self.data[idx]

            def __len__(self):
                return len(self.data)

        text = ("RULE X { CV[1000] < 0.5 AND CV[1100] < 0.5 AND CRRV[1200] > 0.1 "
                "AND RV[1300] < 2 AND CV[1400] > -1 }")
        crs = ss.bind(ss.parse_rules(text), fx17_axis)
        n_atoms = sum(1 for r in crs.rules for _ in r.atoms())

        kappa = CountingArray(np.zeros(229))
        cr_vals = CountingArray(np.ones(229))
        raw_vals = CountingArray(np.full(229, 0.5))
        fs = FeatureSet(curvature=CurvatureSeries(kappa=kappa, first=None, second=None),
                        points=(), threshold=0.1)
        cr = SimpleNamespace(wavelengths=fx17_axis, values=cr_vals)
        raw = SimpleNamespace(wavelengths=fx17_axis, values=raw_vals)
        assert ss.evaluate(crs, fs, cr, raw) == 1
        assert kappa.reads + cr_vals.reads + raw_vals.reads <= n_atoms

    def test_short_circuit_reads_fewer_on_early_false(self, fx17_axis):
        class CountingArray:
            def __init__(self, data):
                self.data = np.asarray(data)
                self.reads = 0

            def __getitem__(self, idx):
                self.reads += 1
                return self.data[idx]

        crs = ss.bind(ss.parse_rules(
            "RULE X { CV[1000] > 99 AND CV[1100] < 0 AND CV[1200] < 0 }"), fx17_axis)
        kappa = CountingArray(np.zeros(229))
        fs = FeatureSet(curvature=CurvatureSeries(kappa=kappa, first=None, second=None),
                        points=(), threshold=0.1)
        cr = SimpleNamespace(wavelengths=fx17_axis, values=np.ones(229))
        raw = SimpleNamespace(wavelengths=fx17_axis, values=np.ones(229))
        assert ss.evaluate(crs, fs, cr, raw) is None
        assert kappa.reads == 1
