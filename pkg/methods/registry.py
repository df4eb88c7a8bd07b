#!/usr/bin/env python3
"""
SplitFlow Method Registry
Built-in splitting methods and lookup by identifier
"""

import threading
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional

import structlog

from methods.coefficients import (MethodKind, SplittingMethod, format_catalog)
from utils.validation import SplitFlowError, sanitize_log_message

logger = structlog.get_logger('SplitFlow.Registry')


class RegistryError(SplitFlowError):
    """Raised for unknown or conflicting method identifiers"""
    pass


# Published 40-digit kernels; exact decimal strings are the source of truth.
METHOD_TABLE: Dict[str, dict] = {
    "LEAPFROG": {
        "kind": MethodKind.ABA,
        "order": (2, 2),
        "stages": 1,
        "a": ["0.5"],
        "b": ["1"],
        "cubic": False,
        "description": "Symmetric second order base scheme",
    },
    "ABA104": {
        "kind": MethodKind.ABA,
        "order": (10, 4),
        "stages": 7,
        "a": [
            "0.04706710064597250612947887637243678556564",
            "0.1847569354170881069247376193702560968574",
            "0.2827060056798362053243616565541452479160",
            "-0.01453004174289681837857815229683813033908",
        ],
        "b": [
            "0.1188819173681970199453503950853885936957",
            "0.2410504605515015657441667865901651105675",
            "-0.2732866667053238060543113981664559460630",
            "0.8267085775712504407295884329818044835997",
        ],
        "cubic": False,
        "description": "ABA composition of generalized order (10,4)",
    },
    "ABA864": {
        "kind": MethodKind.ABA,
        "order": (8, 6, 4),
        "stages": 7,
        "a": [
            "0.0711334264982231177779387300061549964174",
            "0.241153427956640098736487795326289649618",
            "0.521411761772814789212136078067994229991",
            "-0.333698616227678005726562603400438876027",
        ],
        "b": [
            "0.183083687472197221961703757166430291072",
            "0.310782859898574869507522291054262796375",
            "-0.0265646185119588006972121379164987592663",
            "0.0653961422823734184559721793911134363710",
        ],
        "cubic": False,
        "description": "ABA composition of generalized order (8,6,4)",
    },
    "ABA1064": {
        "kind": MethodKind.ABA,
        "order": (10, 6, 4),
        "stages": 8,
        "a": [
            "0.03809449742241219545697532230863756534060",
            "0.1452987161169137492940200726606637497442",
            "0.2076276957255412507162056113249882065158",
            "0.4359097036515261592231548624010651844006",
            "-0.6538612258327867093807117373907094120024",
        ],
        "b": [
            "0.09585888083707521061077150377145884776921",
            "0.2044461531429987806805077839164344779763",
            "0.2170703479789911017143385924306336714532",
            "-0.01737538195906509300561788011852699719871",
        ],
        "cubic": False,
        "description": "ABA composition of generalized order (10,6,4)",
    },
    "ABAH844": {
        "kind": MethodKind.ABAH,
        "order": (8, 4),
        "stages": 6,
        "a": [
            "0.2741402689434018761640565440378637101205",
            "-0.1075684384401642306251105297063236526845",
            "-0.04801850259060169269119541715084750653701",
            "0.7628933441747280943044988056386148982021",
        ],
        "b": [
            "0.6408857951625127177322491164716010349386",
            "-0.8585754489567828565881283246356000103664",
            "0.7176896537942701388558792081639989754277",
        ],
        "cubic": True,
        "description": "Generalized order (8,4) with approximate B-flows",
    },
    "ABAH864": {
        "kind": MethodKind.ABAH,
        "order": (8, 6, 4),
        "stages": 8,
        "a": [
            "0.06810235651658372084723976682061164571212",
            "0.2511360387221033233072829580455350680082",
            "-0.07507264957216562516006821767601620052338",
            "-0.009544719701745007811488218957217113269121",
            "0.5307579480704471776340674235341732001443",
        ],
        "b": [
            "0.1684432593618954534310382697756917558148",
            "0.4243177173742677224300351657407231801453",
            "-0.5858109694681756812309015355404036521923",
            "0.4930499927320125053698281000239887162321",
        ],
        "cubic": True,
        "description": "Generalized order (8,6,4) with approximate B-flows",
    },
    "ABAH1064": {
        "kind": MethodKind.ABAH,
        "order": (10, 6, 4),
        "stages": 9,
        "a": [
            "0.04731908697653382270404371796320813250988",
            "0.2651105235748785159539480036185693201078",
            "-0.009976522883811240843267468164812380613143",
            "-0.05992919973494155126395247987729676004016",
            "0.2574761120673404534492282264603316880356",
        ],
        "b": [
            "0.1196884624585322035312864297489892143852",
            "0.3752955855379374250420128537687503199451",
            "-0.4684593418325993783650820409805381740605",
            "0.3351397342755897010393098942949569049275",
            "0.2766711191210800975049457263356834696055",
        ],
        "cubic": True,
        "description": "Generalized order (10,6,4) with approximate B-flows",
    },
}

# Methods whose digits are produced by the solver on first use
DERIVED_METHODS = ("ABA82", "ABA84")

BUILTIN_IDS = ("ABA82", "ABA84", "ABA104", "ABA864", "ABA1064",
               "ABAH844", "ABAH864", "ABAH1064", "LEAPFROG")


def _build(method_id: str, entry: dict) -> SplittingMethod:
    return SplittingMethod(
        id=method_id,
        kind=entry["kind"],
        order=entry["order"],
        stages=entry["stages"],
        a_kernel=entry["a"],
        b_kernel=entry["b"],
        cubic_condition=entry["cubic"],
        description=entry.get("description", ""),
        source="table",
    )


class MethodRegistry:
    """Immutable method values keyed by identifier"""

    def __init__(self):
        self._methods: Dict[str, SplittingMethod] = {
            method_id: _build(method_id, entry) for method_id, entry in METHOD_TABLE.items()
        }
        self._lock = threading.Lock()

    def ids(self) -> List[str]:
        """Every identifier the registry can resolve"""
        known = [method_id for method_id in BUILTIN_IDS]
        known.extend(sorted(set(self._methods) - set(BUILTIN_IDS)))
        return known

    def lookup(self, method_id: str) -> SplittingMethod:
        method = self._methods.get(method_id)
        if method is not None:
            return method

        if method_id in DERIVED_METHODS:
            return self._derive(method_id)

        raise RegistryError(f"Unknown method id: {sanitize_log_message(method_id)}")

    def _derive(self, method_id: str) -> SplittingMethod:
        with self._lock:
            if method_id not in self._methods:
                from solver.newton import derive_registry_method

                logger.info("deriving method coefficients", method=method_id)
                self._methods[method_id] = derive_registry_method(method_id)
        return self._methods[method_id]

    def list_methods(self, include_derived: bool = True) -> List[SplittingMethod]:
        ids = self.ids() if include_derived else [
            method_id for method_id in self.ids() if method_id not in DERIVED_METHODS
        ]
        return [self.lookup(method_id) for method_id in ids]

    def register(self, method: SplittingMethod, replace: bool = False) -> SplittingMethod:
        """Add a method (e.g. solver output) under its own id"""
        with self._lock:
            if method.id in BUILTIN_IDS and not replace:
                raise RegistryError(f"Cannot replace built-in method {method.id}")
            self._methods[method.id] = method
        logger.info("method registered", method=method.id, order=method.order)
        return method

    def import_solution(self, path: str, method_id: Optional[str] = None) -> SplittingMethod:
        """Register a method from a solver solution file"""
        from solver.newton import read_solution_file

        method = read_solution_file(Path(path), method_id=method_id)
        return self.register(method)

    def export_catalog(self, include_derived: bool = True) -> str:
        return format_catalog(self.list_methods(include_derived))


@lru_cache(maxsize=1)
def default_registry() -> MethodRegistry:
    return MethodRegistry()


def registry_lookup(method_id: str) -> SplittingMethod:
    """Resolve a built-in or registered method identifier"""
    return default_registry().lookup(method_id)
