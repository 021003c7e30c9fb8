SCHEMA_VERSION = 1

EXIT_CODES = {
    "success": 0,
    "failure": 1,
    "validation": 2,
    "criterion_fail": 3,
}

# K is taken strictly inside (0, min(1, smallest eigenvalue of sum E_I))
K_SAFETY = 0.99

KERNEL_TOLERANCES = {
    "rel": 1e-12,
    "abs_floor": 1e-14,
}

NEWTON_DEFAULTS = {
    "tol": 1e-10,
    "max_iter": 50,
    "damping_floor": 2.0 ** -20,
}

CONTINUITY_DEFAULTS = {
    "dt_initial": 0.25,
    "dt_min": 1e-4,
    "grow_after": 2,
    "compatibility_tol": 1e-8,
    "regime_band": 1e-10,
}

GMRES_DEFAULTS = {
    "rtol": 1e-12,
    "atol": 1e-15,
    "restart": 60,
    "maxiter": 40,
    # Accept a Krylov solve that stalled above rtol if it reached this
    "accept_rtol": 1e-6,
}

MOLLIFIER_DEFAULTS = {
    "normalization_tol": 1e-8,
    "cn_defect_tol": 1e-6,
    "radial_order": 24,
    # Trapezoid points per angle, keyed by complex dimension
    "angular_order": {1: 64, 2: 24, 3: 8},
    "simplex_order": 8,
}

LELONG_DEFAULTS = {
    "angular_samples": {1: 64, 2: 12, 3: 6},
    "radial_samples": 64,
}

# Smoothing kernel for the regularized maximum on [-1/2, 1/2]
REGMAX_KERNEL_SCALE = 15.0 / 8.0

# Largest grid also exported as CSV under --format csv
GRID_CSV_LIMIT = 4096

HESSIAN_SCHEMES = ("spectral", "fd2")

MAX_TORIC_DIM = 3
MAX_ORACLE_DIM = 4
MAX_TORUS_DIM = 3
MIN_GRID_POINTS = 8

# --- Config schemas (jsonschema, draft 7) ---

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}}
_MATRIX = {"type": "array", "items": _NUMBER_LIST}
_RATIONAL = {"type": ["string", "integer"]}

_EQUATION = {
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "c": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "c0": {"type": "number"},
        "fIntegral": {"type": "number"},
    },
    "required": ["n", "c"],
    "additionalProperties": False,
}

_TRIG_TERM = {
    "type": "object",
    "properties": {
        "amplitude": {"type": "number"},
        "wavevector": {"type": "array", "items": {"type": "integer"}},
        "kind": {"enum": ["cos", "sin"]},
    },
    "required": ["amplitude", "wavevector"],
    "additionalProperties": False,
}

_TRIG = {
    "type": "object",
    "properties": {
        "constant": {"type": "number"},
        "terms": {"type": "array", "items": _TRIG_TERM},
    },
    "additionalProperties": False,
}

_GEOMETRY = {
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 1, "maximum": MAX_TORUS_DIM},
        "gridShape": {"type": "array", "items": {"type": "integer", "minimum": MIN_GRID_POINTS}},
        "X": _MATRIX,
        "W0": _MATRIX,
        "scheme": {"enum": list(HESSIAN_SCHEMES)},
    },
    "required": ["n", "gridShape", "X", "W0"],
    "additionalProperties": False,
}

_SOLVER = {
    "type": "object",
    "properties": {
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "maxIter": {"type": "integer", "minimum": 1},
        "dtInitial": {"type": "number", "exclusiveMinimum": 0},
        "dtMin": {"type": "number", "exclusiveMinimum": 0},
        "compatibilityTol": {"type": "number", "exclusiveMinimum": 0},
        "enforceRegime": {"type": "boolean"},
    },
    "additionalProperties": False,
}

_POLYTOPE = {
    "type": "object",
    "properties": {
        "vertices": {"type": "array", "items": {"type": "array", "items": _RATIONAL}},
        "labels": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "integer"}},
        },
    },
    "required": ["vertices"],
    "additionalProperties": False,
}

_SMOOTH = {
    "type": "object",
    "properties": {
        "constant": {"type": "number"},
        "linear": _NUMBER_LIST,
        "quadratic": {"type": "number"},
    },
    "additionalProperties": False,
}

_QUADRATIC = {
    "type": "object",
    "properties": {"Q": _MATRIX, "b": _NUMBER_LIST, "c": {"type": "number"}},
    "required": ["Q"],
    "additionalProperties": False,
}

_BASE = {
    "schemaVersion": {"const": SCHEMA_VERSION},
    "description": {"type": "string"},
}


def _schema(properties, required):
    return {
        "type": "object",
        "properties": {**_BASE, **properties},
        "required": ["schemaVersion", *required],
        "additionalProperties": False,
    }


CONFIG_SCHEMAS = {
    "kernel.cone": _schema(
        {"equation": _EQUATION, "t": {"type": "number", "minimum": 0, "maximum": 1},
         "lambda": _NUMBER_LIST},
        ["equation", "lambda"]),
    "kernel.fm": _schema(
        {"equation": _EQUATION, "classRatio": {"type": "number", "exclusiveMinimum": 0}},
        ["equation", "classRatio"]),
    "kernel.identities": _schema(
        {"samples": {"type": "integer", "minimum": 1},
         "maxDim": {"type": "integer", "minimum": 2, "maximum": 8}},
        []),
    "solve.run": _schema(
        {"equation": _EQUATION, "geometry": _GEOMETRY, "f": _TRIG,
         "fGridPath": {"type": "string"}, "solver": _SOLVER,
         "referencePath": {"type": "string"}},
        ["equation", "geometry"]),
    "solve.manufacture": _schema(
        {"equation": _EQUATION, "geometry": _GEOMETRY, "phiStar": _TRIG},
        ["equation", "geometry", "phiStar"]),
    "solve.classpath": _schema(
        {"equation": _EQUATION, "geometry": _GEOMETRY, "f": _TRIG,
         "fGridPath": {"type": "string"}, "solver": _SOLVER,
         "sList": _NUMBER_LIST},
        ["equation", "geometry", "sList"]),
    "toric.check": _schema(
        {"equation": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "minimum": 2, "maximum": MAX_TORIC_DIM},
                "c": {"type": "array", "items": _RATIONAL},
                "jEquation": {"type": "integer", "minimum": 1},
                "fIntegral": _RATIONAL,
            },
            "required": ["n"],
            "additionalProperties": False,
        },
         "omega": _POLYTOPE, "chi": _POLYTOPE,
         "restrictTo": {"type": "string"}},
        ["equation", "omega", "chi"]),
    "psh.mollify": _schema(
        {"n": {"type": "integer", "minimum": 1, "maximum": 3},
         "kernel": {"enum": ["poly", "constant"]},
         "gamma": {"type": "number", "minimum": 0},
         "center": _NUMBER_LIST,
         "smooth": _SMOOTH,
         "samplesPath": {"type": "string"},
         "delta": {"type": "number", "exclusiveMinimum": 0},
         "points": {"type": "array", "items": _NUMBER_LIST}},
        ["n", "delta", "points"]),
    "psh.lelong": _schema(
        {"n": {"type": "integer", "minimum": 1, "maximum": 3},
         "gamma": {"type": "number", "minimum": 0},
         "center": _NUMBER_LIST,
         "smooth": _SMOOTH,
         "samplesPath": {"type": "string"},
         "point": _NUMBER_LIST,
         "r": {"type": "number", "exclusiveMinimum": 0},
         "deltas": _NUMBER_LIST},
        ["n", "r", "deltas"]),
    # sidecar of a sampled smooth part: log coefficient, pole and the sampled box
    "potential.sidecar": _schema(
        {"gamma": {"type": "number", "minimum": 0},
         "center": _NUMBER_LIST,
         "box": {"type": "array", "items": _NUMBER_LIST, "minItems": 2, "maxItems": 2}},
        ["box"]),
    "psh.cn": _schema(
        {"n": {"type": "integer", "minimum": 1, "maximum": 3},
         "kernel": {"enum": ["poly", "constant"]},
         "eps": {"type": "number", "exclusiveMinimum": 0},
         "r": {"type": "number", "exclusiveMinimum": 0}},
        ["n"]),
    "psh.glue": _schema(
        {"equation": _EQUATION,
         "local": _QUADRATIC,
         "global": _QUADRATIC,
         "W0": _MATRIX, "X": _MATRIX,
         "eta": {"type": "number", "exclusiveMinimum": 0},
         "offset": {"type": "number"},
         "box": {"type": "array", "items": _NUMBER_LIST, "minItems": 2, "maxItems": 2},
         "points": {"type": "integer", "minimum": 2},
         "center": _NUMBER_LIST,
         "innerRadius": {"type": "number", "minimum": 0},
         "outerRadius": {"type": "number", "minimum": 0}},
        ["equation", "local", "global", "W0", "X", "eta", "offset", "box"]),
}
