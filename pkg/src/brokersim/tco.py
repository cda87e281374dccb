"""Equipment catalogs, bill-of-materials math, topology sizing, and yearly TCO.

Money is integer cents throughout, so totals are exact and independent of
line order.  Two reference designs ship as catalog data: a homogeneous
1024-node deployment (every server identically equipped, three-level
fat tree) and a purpose-built variant (lean broker servers with extra
drives and 50 GbE, compute servers on 10 GbE behind splitter cables).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import yaml

HOURS_PER_YEAR = 8760
DEFAULT_AMORTIZATION_YEARS = 3
DEFAULT_POWER_RATE = 0.10  # currency per kWh
DEFAULT_COOLING_FACTOR = 1.0  # cooling draws about as much as the IT load


class CatalogError(KeyError):
    pass


@dataclass(frozen=True)
class CatalogItem:
    sku: str
    description: str
    unit_price_cents: int
    unit_power_w: float = 0.0

    @property
    def unit_price(self) -> float:
        return self.unit_price_cents / 100.0


@dataclass(frozen=True)
class BomLine:
    item: CatalogItem
    quantity: int


@dataclass(frozen=True)
class BillOfMaterials:
    name: str
    lines: tuple[BomLine, ...]

    def quantity(self, sku: str) -> int:
        for line in self.lines:
            if line.item.sku == sku:
                return line.quantity
        return 0


def bom_total_cents(bom: BillOfMaterials) -> int:
    """Exact total in integer cents."""
    total = 0
    for line in bom.lines:
        if line.quantity < 0:
            raise ValueError(f"{line.item.sku}: negative quantity")
        total += line.item.unit_price_cents * line.quantity
    return total


def bom_total(bom: BillOfMaterials) -> float:
    return bom_total_cents(bom) / 100.0


def fat_tree_size(nodes: int, switch_ports: int) -> tuple[int, int]:
    """Three-level non-blocking fat-tree sizing: (switches, cables).

    Edge switches give half their ports to nodes; aggregation mirrors edge;
    core takes one switch per two edge switches.  Every node contributes
    three cable hops (node-edge, edge-aggregation, aggregation-core).  A
    deployment that fits behind one switch needs no tree.
    """
    if switch_ports < 2 or switch_ports % 2:
        raise ValueError(f"switch_ports must be even and >= 2, got {switch_ports}")
    if nodes < 0:
        raise ValueError(f"nodes must be >= 0, got {nodes}")
    if nodes == 0:
        return 0, 0
    if nodes <= switch_ports:
        return 1, nodes
    edge = -(-nodes // (switch_ports // 2))
    aggregation = edge
    core = -(-edge // 2)
    return edge + aggregation + core, 3 * nodes


def power_cost(total_kw: float, rate_per_kwh: float, hours: float) -> float:
    """Energy cost of drawing `total_kw` for `hours` at the given rate."""
    if total_kw < 0 or rate_per_kwh < 0 or hours < 0:
        raise ValueError("power inputs must be >= 0")
    # integer-cent rounding keeps report arithmetic exact
    return round(total_kw * rate_per_kwh * hours * 100) / 100.0


def facility_kw(it_kw: float, cooling_factor: float = DEFAULT_COOLING_FACTOR) -> float:
    """IT load plus cooling overhead (cooling roughly doubles the draw)."""
    return it_kw * (1.0 + cooling_factor)


@dataclass(frozen=True)
class TcoReport:
    design: str
    equipment_total: float
    amortized_equipment_per_year: float
    power_kw: float
    power_cost_per_year: float
    yearly_total: float
    delta_vs_baseline: float | None = None  # 1 - this/baseline


def yearly_tco(bom: BillOfMaterials, amortization_years: float,
               facility_kw_total: float, rate_per_kwh: float = DEFAULT_POWER_RATE,
               overhead_factor: float = 0.0) -> TcoReport:
    """Straight-line amortized equipment plus yearly power.

    `overhead_factor` scales the amortized equipment share to cover rack,
    cabling, and similar extras that a full TCO calculator would include;
    the shipped catalogs leave it at zero.
    """
    if amortization_years <= 0:
        raise ValueError("amortization_years must be > 0")
    equipment = bom_total(bom)
    amortized = equipment / amortization_years
    power = power_cost(facility_kw_total, rate_per_kwh, HOURS_PER_YEAR)
    return TcoReport(
        design=bom.name,
        equipment_total=equipment,
        amortized_equipment_per_year=amortized,
        power_kw=facility_kw_total,
        power_cost_per_year=power,
        yearly_total=amortized * (1.0 + overhead_factor) + power,
    )


def tco_delta(report: TcoReport, baseline: TcoReport) -> float:
    return 1.0 - report.yearly_total / baseline.yearly_total


# ---------------------------------------------------------------------------
# Catalogs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Catalog:
    """Priced SKUs plus the sizing rules and defaults for one design family."""

    items: dict  # sku -> CatalogItem
    rules: dict = field(default_factory=dict)
    defaults: dict = field(default_factory=dict)

    def item(self, sku: str) -> CatalogItem:
        try:
            return self.items[sku]
        except KeyError:
            raise CatalogError(f"catalog has no sku {sku!r}") from None


def parse_catalog(document: str) -> Catalog:
    raw = yaml.safe_load(document)
    if not isinstance(raw, dict) or "items" not in raw:
        raise CatalogError("catalog document needs an 'items' mapping")
    items = {}
    for sku, entry in raw["items"].items():
        items[sku] = CatalogItem(
            sku=sku,
            description=entry.get("description", sku),
            unit_price_cents=round(float(entry["unit_price"]) * 100),
            unit_power_w=float(entry.get("unit_power_w", 0.0)),
        )
    return Catalog(items=items, rules=raw.get("rules", {}),
                   defaults=raw.get("defaults", {}))


def load_catalog(name_or_path: str) -> Catalog:
    """Load a shipped catalog by name or any catalog YAML by path."""
    shipped = resources.files("brokersim.data").joinpath(f"catalog-{name_or_path}.yaml")
    if shipped.is_file():
        return parse_catalog(shipped.read_text())
    with open(name_or_path) as fh:
        return parse_catalog(fh.read())


def homogeneous_bom(catalog: Catalog, nodes: int | None = None) -> BillOfMaterials:
    """Identical servers behind a three-level fat tree."""
    d = catalog.defaults
    n = int(d.get("nodes", 1024)) if nodes is None else nodes
    ports = int(d.get("switch_ports", 32))
    switches, cables = fat_tree_size(n, ports)
    lines = (
        BomLine(catalog.item("base-server"), n),
        BomLine(catalog.item("nvme-drive"), n),
        BomLine(catalog.item("nic-100g"), n),
        BomLine(catalog.item("switch-100g"), switches),
        BomLine(catalog.item("cable-100g"), cables),
    )
    return BillOfMaterials("homogeneous", lines)


def node_split(total_nodes: int) -> tuple[int, int, int]:
    """(brokers, producers, consumers) keeping the reference 8:15:30 mix.

    Producers take floor(15/53) of the fleet, consumers twice that, and the
    remainder becomes brokers.
    """
    producers = (total_nodes * 15) // 53
    consumers = 2 * producers
    brokers = total_nodes - producers - consumers
    if brokers < 1:
        raise ValueError(f"{total_nodes} nodes leave no brokers")
    return brokers, producers, consumers


def purpose_built_bom(compute_nodes: int, broker_nodes: int,
                      catalog: Catalog) -> BillOfMaterials:
    """Heterogeneous design: lean multi-drive brokers, slim-network compute.

    Sizing rules (all overridable via catalog data): brokers pair up on
    100 GbE ports through 2x50G splitters; compute nodes hang off 40 GbE
    switches through 4x10G splitters, two 40G switches per 100 GbE edge
    switch; every edge switch uplinks to each of the core switches.
    """
    if compute_nodes <= 0 or broker_nodes <= 0:
        raise ValueError("both compute and broker node counts must be > 0")
    r = catalog.rules
    compute_per_40g = int(r.get("compute_per_40g_switch", 64))
    n40_per_edge = int(r.get("forty_g_per_edge_switch", 2))
    brokers_per_edge = int(r.get("brokers_per_edge_switch", 32))
    drives_per_broker = int(r.get("drives_per_broker", 4))
    core_switches = int(r.get("core_switches", 16))
    uplinks_per_edge = int(r.get("uplinks_per_edge", 16))

    n40 = -(-compute_nodes // compute_per_40g)
    edge_compute = -(-n40 // n40_per_edge)
    edge_broker = -(-broker_nodes // brokers_per_edge)
    edge = edge_compute + edge_broker
    switches_100g = edge + core_switches
    optical_splitters = -(-n40 // 2)  # 100G->2x50G feeds per 40G-switch pair
    copper_10g_splitters = -(-compute_nodes // 4)
    copper_50g_splitters = -(-broker_nodes // 2)
    interconnects = uplinks_per_edge * edge

    lines = (
        BomLine(catalog.item("compute-server"), compute_nodes),
        BomLine(catalog.item("nic-10g"), compute_nodes),
        BomLine(catalog.item("broker-server"), broker_nodes),
        BomLine(catalog.item("nic-50g"), broker_nodes),
        BomLine(catalog.item("nvme-drive"), broker_nodes * drives_per_broker),
        BomLine(catalog.item("switch-100g"), switches_100g),
        BomLine(catalog.item("switch-40g"), n40),
        BomLine(catalog.item("splitter-optical-100g-2x50g"), optical_splitters),
        BomLine(catalog.item("splitter-copper-40g-4x10g"), copper_10g_splitters),
        BomLine(catalog.item("splitter-copper-100g-2x50g"), copper_50g_splitters),
        BomLine(catalog.item("interconnect-optical-100g"), interconnects),
    )
    return BillOfMaterials("purpose-built", lines)


def component_power_kw(bom: BillOfMaterials) -> float:
    """Sum of per-item power draws; zero-power items contribute nothing."""
    return sum(l.item.unit_power_w * l.quantity for l in bom.lines) / 1000.0


def compare_designs(homogeneous_catalog: Catalog, purpose_catalog: Catalog,
                    amortization_years: float = DEFAULT_AMORTIZATION_YEARS,
                    ) -> tuple[TcoReport, TcoReport]:
    """Yearly TCO of both shipped designs; the purpose-built report carries
    the delta against the homogeneous baseline."""
    hbom = homogeneous_bom(homogeneous_catalog)
    hd = homogeneous_catalog.defaults
    hrep = yearly_tco(
        hbom, amortization_years,
        facility_kw(float(hd.get("it_power_kw", 921.0))),
        float(hd.get("power_rate", DEFAULT_POWER_RATE)),
    )
    pd_ = purpose_catalog.defaults
    total = int(hd.get("nodes", 1024))
    brokers, producers, consumers = node_split(total)
    pbom = purpose_built_bom(producers + consumers, brokers, purpose_catalog)
    prep = yearly_tco(
        pbom, amortization_years,
        facility_kw(float(pd_.get("it_power_kw", 799.087))),
        float(pd_.get("power_rate", DEFAULT_POWER_RATE)),
    )
    prep = TcoReport(
        design=prep.design,
        equipment_total=prep.equipment_total,
        amortized_equipment_per_year=prep.amortized_equipment_per_year,
        power_kw=prep.power_kw,
        power_cost_per_year=prep.power_cost_per_year,
        yearly_total=prep.yearly_total,
        delta_vs_baseline=tco_delta(prep, hrep),
    )
    return hrep, prep


def format_report(report: TcoReport) -> str:
    lines = [
        f"design:               {report.design}",
        f"equipment total:      ${report.equipment_total:,.2f}",
        f"amortized per year:   ${report.amortized_equipment_per_year:,.2f}",
        f"facility power:       {report.power_kw:,.1f} kW",
        f"power cost per year:  ${report.power_cost_per_year:,.2f}",
        f"yearly total:         ${report.yearly_total:,.2f}",
    ]
    if report.delta_vs_baseline is not None:
        lines.append(f"delta vs baseline:    {report.delta_vs_baseline:.1%}")
    return "\n".join(lines)
