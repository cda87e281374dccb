"""Equipment totals, topology sizing, power, and the design comparison."""

import pytest

from brokersim import tco


@pytest.fixture(scope="module")
def homogeneous():
    return tco.load_catalog("homogeneous")


@pytest.fixture(scope="module")
def purpose():
    return tco.load_catalog("purpose-built")


def test_homogeneous_bom_total_exact(homogeneous):
    bom = tco.homogeneous_bom(homogeneous)
    assert tco.bom_total_cents(bom) == 33_577_760_00


def test_purpose_built_bom_total_exact(purpose):
    brokers, producers, consumers = tco.node_split(1024)
    bom = tco.purpose_built_bom(producers + consumers, brokers, purpose)
    assert tco.bom_total_cents(bom) == 27_878_431_00


def test_purpose_built_quantities(purpose):
    bom = tco.purpose_built_bom(867, 157, purpose)
    assert bom.quantity("switch-100g") == 28
    assert bom.quantity("switch-40g") == 14
    assert bom.quantity("splitter-optical-100g-2x50g") == 7
    assert bom.quantity("splitter-copper-40g-4x10g") == 217
    assert bom.quantity("splitter-copper-100g-2x50g") == 79
    assert bom.quantity("interconnect-optical-100g") == 192
    assert bom.quantity("nvme-drive") == 157 * 4


def test_node_split_reference_mix():
    assert tco.node_split(1024) == (157, 289, 578)


def test_bom_total_reorder_invariant(homogeneous):
    bom = tco.homogeneous_bom(homogeneous)
    reordered = tco.BillOfMaterials(bom.name, tuple(reversed(bom.lines)))
    assert tco.bom_total_cents(bom) == tco.bom_total_cents(reordered)


def test_empty_bom_is_zero():
    assert tco.bom_total_cents(tco.BillOfMaterials("empty", ())) == 0


def test_missing_sku_is_an_error(purpose):
    catalog = tco.Catalog(items={k: v for k, v in purpose.items.items()
                                 if k != "switch-40g"}, rules=purpose.rules)
    with pytest.raises(tco.CatalogError):
        tco.purpose_built_bom(867, 157, catalog)


def test_purpose_built_rejects_zero_brokers(purpose):
    with pytest.raises(ValueError):
        tco.purpose_built_bom(867, 0, purpose)


def test_fat_tree_reference_sizing():
    assert tco.fat_tree_size(1024, 32) == (160, 3072)


def test_fat_tree_small_and_empty():
    assert tco.fat_tree_size(16, 32) == (1, 16)
    assert tco.fat_tree_size(0, 32) == (0, 0)


def test_fat_tree_monotone_in_nodes_and_cable_rule():
    prev_switches = 0
    for nodes in (0, 8, 32, 33, 64, 128, 512, 1024, 2048):
        switches, cables = tco.fat_tree_size(nodes, 32)
        assert switches >= prev_switches
        prev_switches = switches
        if nodes > 32:
            assert cables == 3 * nodes


def test_fat_tree_rejects_odd_ports():
    with pytest.raises(ValueError):
        tco.fat_tree_size(100, 33)


def test_power_cost_reference_points():
    assert tco.power_cost(1842, 0.10, 1) == 184.20
    assert tco.power_cost(1842, 0.10, 8760) == 1_613_592.00
    assert tco.power_cost(0, 0.10, 8760) == 0.0


def test_facility_power_doubles_for_cooling():
    assert tco.facility_kw(921) == 1842


def test_yearly_tco_linear_in_equipment_and_rate(homogeneous):
    bom = tco.homogeneous_bom(homogeneous)
    base = tco.yearly_tco(bom, 3, 1842, 0.10)
    doubled_years = tco.yearly_tco(bom, 6, 1842, 0.10)
    assert doubled_years.amortized_equipment_per_year == pytest.approx(
        base.amortized_equipment_per_year / 2)
    pricier = tco.yearly_tco(bom, 3, 1842, 0.20)
    assert pricier.power_cost_per_year == pytest.approx(
        2 * base.power_cost_per_year)


def test_design_comparison_reference_numbers(homogeneous, purpose):
    hrep, prep = tco.compare_designs(homogeneous, purpose)
    # within +-10% of the reference yearly figures
    assert hrep.yearly_total == pytest.approx(12.9e6, rel=0.10)
    assert prep.yearly_total == pytest.approx(10.8e6, rel=0.10)
    assert 0.145 <= prep.delta_vs_baseline <= 0.185
    # the purpose-built design is cheaper outright
    assert prep.equipment_total < hrep.equipment_total


def test_component_power_sum_differs_from_nameplate(homogeneous):
    # the shipped budget keeps the nameplate figure; the component sum is
    # available and lands lower
    bom = tco.homogeneous_bom(homogeneous)
    component = tco.component_power_kw(bom)
    assert component == pytest.approx(831.68, abs=0.01)
    assert component < float(homogeneous.defaults["it_power_kw"])
