"""
Матрицы фуксовой системы и её симметризации: ℬc, ℙ, E^D, A^D, 𝒜, V, V⁻¹,
𝒮, M*, B⁰, B^D, ℬ_s; решение уравнений на параметры, проверки
положительности и точные матричные тождества
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse

from errors import GaugeError
from kasner import KasnerData

if TYPE_CHECKING:
    from fuchsian import GaugeParams

logger = logging.getLogger(__name__)

FIELD_ORDER = ("e", "alpha", "C", "U", "H", "Sigma")
# наименьшее собственное значение, считающееся строго положительным
PD_MARGIN = 1e-10


class FieldIndexMap:
    """Раскладка составного вектора W = (e, α, C, U, ℋ, Σ) в плоский индекс"""

    def __init__(self, n: int):
        self.n = n
        self.d = n - 1
        d = self.d
        self.shapes: Dict[str, Tuple[int, ...]] = {
            "e": (d, d), "alpha": (), "C": (d, d, d), "U": (d,), "H": (), "Sigma": (d, d),
        }
        self.slots: Dict[str, slice] = {}
        start = 0
        for name in FIELD_ORDER:
            size = int(np.prod(self.shapes[name], dtype=int))
            self.slots[name] = slice(start, start + size)
            start += size
        self.N = start

    def size(self, name: str) -> int:
        return self.slots[name].stop - self.slots[name].start

    def label(self, index: int) -> str:
        """Читаемое имя компоненты, например C[1,2,1]"""
        for name in FIELD_ORDER:
            sl = self.slots[name]
            if sl.start <= index < sl.stop:
                shape = self.shapes[name]
                if not shape:
                    return name
                idx = np.unravel_index(index - sl.start, shape)
                return f"{name}[{','.join(str(int(i) + 1) for i in idx)}]"
        raise IndexError(index)

    def pack(self, parts: Dict[str, np.ndarray], grid_shape: Tuple[int, ...] = ()) -> np.ndarray:
        """Сборка массива формы (N, *grid) из полей"""
        blocks = [np.asarray(parts[name]).reshape((self.size(name),) + tuple(grid_shape))
                  for name in FIELD_ORDER]
        return np.concatenate(blocks, axis=0)

    def unpack(self, vector: np.ndarray) -> Dict[str, np.ndarray]:
        grid_shape = vector.shape[1:]
        return {name: vector[self.slots[name]].reshape(self.shapes[name] + grid_shape)
                for name in FIELD_ORDER}


# Тензоры из дельт Кронекера над пространственными индексами


def delta_tensors(d: int) -> Dict[str, np.ndarray]:
    """K = δ_[A^Pδ_C]B, Kt = δ_A^[Pδ^R]Q, S = δ_⟨A^Pδ_B⟩^Q, M3, M4 как float-массивы"""
    numerators, denominators = integer_delta_tensors(d)
    return {name: numerators[name] / denominators[name] for name in numerators}


def integer_delta_tensors(d: int) -> Tuple[Dict[str, np.ndarray], Dict[str, int]]:
    """Те же тензоры в виде целых числителей и общих знаменателей"""
    eye = np.eye(d, dtype=np.int64)
    k2 = np.einsum("ap,cb->abcp", eye, eye) - np.einsum("cp,ab->abcp", eye, eye)
    kt2 = k2.transpose(3, 0, 1, 2)
    s2d = d * (np.einsum("ap,bq->abpq", eye, eye) + np.einsum("aq,bp->abpq", eye, eye)) \
        - 2 * np.einsum("ab,pq->abpq", eye, eye)
    # M3^D_{ABC}^{PQ} = ½(δ_AD S_CB^PQ − δ_CD S_AB^PQ)
    m3 = np.einsum("ad,cbpq->dabcpq", eye, s2d) - np.einsum("cd,abpq->dabcpq", eye, s2d)
    # M4^D_{ABC}^{PQ} = STF_PQ(δ^DP K_ABC^Q)
    m4 = d * (np.einsum("dp,abcq->dabcpq", eye, k2) + np.einsum("dq,abcp->dabcpq", eye, k2)) \
        - 2 * np.einsum("pq,abcd->dabcpq", eye, k2)
    numerators = {"K": k2, "Kt": kt2, "S": s2d, "M3": m3, "M4": m4}
    denominators = {"K": 2, "Kt": 2, "S": 2 * d, "M3": 4 * d, "M4": 4 * d}
    return numerators, denominators


class SymmetrizerParams(NamedTuple):
    p: float
    q: float
    s: float
    u: float
    a: float


def solve_params(n: int, mu: float, gamma: float, b: float, c: float, d: float,
                 h: float = 1.0, l: Optional[float] = None) -> SymmetrizerParams:
    """Решение уравнений симметричности B^D относительно p, q, s, u, a

    Args:
        n: Размерность
        mu, gamma: Коэффициенты добавленных связей
        b, c, d: Свободные параметры V
        h, l: Веса ℋ- и Σ-блоков 𝒮

    Returns:
        SymmetrizerParams(p, q, s, u, a)
    """
    if l is None:
        l = 1.0 / (n - 1)
    lin = 1.0 + n * (gamma - 1.0) - 2.0 * gamma
    den_pqa = 4.0 * h * gamma + l * (n - 1) * (2.0 - 6.0 * gamma + n * (2.0 * gamma - mu - 2.0) + mu)
    den_s = (n - 1) ** 2 * (2.0 + (n - 2) * mu)
    problems = []
    if abs(den_pqa) < 1e-14:
        problems.append(f"4hγ + l(n−1)(2 − 6γ + n(2γ−μ−2) + μ) = {den_pqa:.3e}")
    if abs(den_s) < 1e-14:
        problems.append(f"(n−1)²(2 + (n−2)μ) = {den_s:.3e}")
    if problems:
        raise GaugeError([f"Вырожденный знаменатель: {p}" for p in problems])

    p = c * l * (l * (n - 1) * lin + h * gamma) / den_pqa
    q = c * l * (h * (mu - 2.0) + l * (n - 1) * (2.0 + (n - 2) * mu)) / den_pqa
    s = (-2.0 * d * l * (n - 1) * lin - 2.0 * d * h * gamma
         + b * (l * (n * n - 4 * n + 3) * lin + 2.0 * h * (n - 2) * gamma)) / den_s
    u = (-b * (n - 2) * (2.0 * h + l * (n * n - 4 * n + 3))
         + 2.0 * d * (h + l * (n * n - 3 * n + 2))) / (2.0 * (n - 1) ** 2)
    a = 2.0 * c * (l * (n - 1) * lin + h * gamma) / den_pqa
    return SymmetrizerParams(p=p, q=q, s=s, u=u, a=a)


@dataclass
class SymmetrizerSet:
    """Все матрицы фуксовой системы над составным индексом"""
    index: FieldIndexMap
    Bc: np.ndarray
    P_proj: np.ndarray
    E: np.ndarray
    A: np.ndarray
    Acal: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    Scal: np.ndarray
    B0: np.ndarray
    BD: np.ndarray
    Bs: np.ndarray
    Mstar: np.ndarray
    gp: "GaugeParams"
    kd: KasnerData

    @property
    def n(self) -> int:
        return self.index.n

    @property
    def N(self) -> int:
        return self.index.N

    @property
    def SAV(self) -> np.ndarray:
        return self.Scal @ self.Acal @ self.V

    def report(self) -> Dict:
        """Сводка проверки для report.json"""
        return verify(self).to_dict()


class _Assembler:
    """Размещение тензорных блоков в N×N матрице"""

    def __init__(self, index: FieldIndexMap):
        self.index = index

    def zeros(self) -> np.ndarray:
        return np.zeros((self.index.N, self.index.N))

    def put(self, matrix: np.ndarray, row: str, col: str, tensor) -> None:
        rows, cols = self.index.slots[row], self.index.slots[col]
        block = np.asarray(tensor, dtype=float)
        matrix[rows, cols] = block.reshape(rows.stop - rows.start, cols.stop - cols.start)

    def identity_block(self, name: str, scale: float = 1.0) -> np.ndarray:
        size = self.index.size(name)
        return scale * np.eye(size)


def _bc_diagonal(index: FieldIndexMap, kd: KasnerData, gp) -> Dict[str, np.ndarray]:
    r = kd.r
    d = index.d
    kappa0 = 1.0 + kd.r0 / 2.0
    kappa1 = gp.eps1 + kd.r0 / 2.0
    kappa2 = gp.eps2 + kd.r0 / 2.0
    c_diag = kappa0 - 0.5 * (r[:, None, None] + r[None, None, :] - r[None, :, None])
    return {
        "e": np.repeat((kappa2 - 0.5 * r)[:, None], d, axis=1),
        "alpha": np.array(kappa1),
        "C": c_diag,
        "U": kappa0 - 0.5 * r,
        "H": np.array(kappa0),
        "Sigma": np.full((d, d), kappa0),
    }


def _check_bc_positive(index: FieldIndexMap, diag: Dict[str, np.ndarray]) -> None:
    offending = []
    for name, values in diag.items():
        values = np.asarray(values)
        if name == "C":
            # компоненты с A = C не несут данных антисимметричного C
            mask = ~np.eye(index.d, dtype=bool)[:, None, :]
            mask = np.broadcast_to(mask, values.shape)
        else:
            mask = np.ones(values.shape, dtype=bool)
        flat = values.reshape(-1)
        for pos in np.flatnonzero(mask.reshape(-1) & (flat <= 0.0)):
            label = index.label(index.slots[name].start + int(pos))
            offending.append(f"ℬc[{label}] = {flat[pos]:.6g} ≤ 0")
    if offending:
        raise GaugeError(offending)


def build(n: int, kd: KasnerData, gp: "GaugeParams") -> SymmetrizerSet:
    """Сборка всех матриц симметризации

    Args:
        n: Размерность пространства-времени
        kd: Субкритический фон Казнера
        gp: Калибровочные параметры и параметры симметризатора

    Returns:
        SymmetrizerSet
    """
    if kd.n != n:
        raise GaugeError([f"Размерность фона {kd.n} ≠ n = {n}"])
    index = FieldIndexMap(n)
    asm = _Assembler(index)
    d = index.d
    T = delta_tensors(d)
    K, Kt, S, M3, M4 = T["K"], T["Kt"], T["S"], T["M3"], T["M4"]
    eye = np.eye(d)
    r = kd.r_matrix
    kappa0 = 1.0 + kd.r0 / 2.0
    mu, gamma = gp.mu, gp.gamma

    diag = _bc_diagonal(index, kd, gp)
    _check_bc_positive(index, diag)
    Bc = np.diag(np.concatenate([np.asarray(diag[name]).reshape(-1) for name in FIELD_ORDER]))
    proj = np.concatenate([np.full(index.size(name), 0.0 if name in ("H", "Sigma") else 1.0)
                           for name in FIELD_ORDER])
    P_proj = np.diag(proj)

    # Σ-строка, C-столбец: δ^{D[P}δ_⟨A^{R]}δ_B⟩^Q + δ_⟨A^Dδ_B⟩^{[P}δ^{R]Q}
    sigma_c = -(M3 + M4).transpose(0, 4, 5, 1, 2, 3)

    E = np.zeros((d, index.N, index.N))
    A = np.zeros((d, index.N, index.N))
    for D in range(d):
        base = asm.zeros()
        asm.put(base, "C", "H", -2.0 * K[..., D])
        asm.put(base, "C", "Sigma", -2.0 * M3[D])
        asm.put(base, "U", "H", (n - 1) * eye[:, D])
        asm.put(base, "H", "C", -2.0 / (n - 1) * Kt[D])
        asm.put(base, "H", "U", eye[D] / (n - 1))
        asm.put(base, "Sigma", "C", sigma_c[D])
        asm.put(base, "Sigma", "U", S[:, :, D, :])
        E[D] = base

        bracket = base.copy()
        asm.put(bracket, "C", "H", -(mu * n - 2.0 * mu + 2.0) * K[..., D])
        asm.put(bracket, "C", "Sigma", -2.0 * M3[D] + mu * M4[D])
        asm.put(bracket, "U", "H", ((n - 1) - gamma * (n - 2)) * eye[:, D])
        asm.put(bracket, "U", "Sigma", gamma * S[D])
        A[D] = -bracket

    # r_[A^P δ_C]B
    Kr = np.einsum("abce,ep->abcp", K, r)
    Acal = asm.zeros()
    asm.put(Acal, "e", "e", np.diag(diag["e"].reshape(-1)))
    asm.put(Acal, "alpha", "alpha", diag["alpha"])
    a33 = np.diag(diag["C"].reshape(-1)).reshape((d,) * 6) \
        - 0.5 * mu * np.einsum("pq,abcr->abcpqr", r, K) \
        - 0.5 * mu * np.einsum("abcp,qr->abcpqr", Kr, eye)
    asm.put(Acal, "C", "C", a33)
    asm.put(Acal, "C", "U", mu * (kappa0 * K - 0.5 * Kr))
    asm.put(Acal, "U", "C", 0.5 * gamma * (np.einsum("qr,ap->apqr", r, eye)
                                            - np.einsum("ap,qr->apqr", r, eye)))
    asm.put(Acal, "U", "U", (gamma + 1.0) * (kappa0 * eye - 0.5 * r))

    V = np.eye(index.N)
    Scal = np.eye(index.N)
    for matrix, (c_c, c_u, u_c, u_u) in ((V, (gp.a, gp.b, gp.c, gp.d)),
                                          (Scal, (gp.p, gp.q, gp.s, gp.u))):
        asm.put(matrix, "C", "C", asm.identity_block("C", c_c))
        asm.put(matrix, "C", "U", c_u * K)
        asm.put(matrix, "U", "C", u_c * Kt)
        asm.put(matrix, "U", "U", asm.identity_block("U", u_u))
    asm.put(Scal, "H", "H", gp.h)
    asm.put(Scal, "Sigma", "Sigma", asm.identity_block("Sigma", gp.l))

    KK = (K.reshape(d ** 3, d) @ Kt.reshape(d, d ** 3))
    Mstar = gp.a * np.eye(d ** 3) - gp.b * gp.c / gp.d * KK
    Mstar_inv = scipy.linalg.inv(Mstar)
    Kmat = K.reshape(d ** 3, d)
    Ktmat = Kt.reshape(d, d ** 3)
    Vinv = np.eye(index.N)
    asm.put(Vinv, "C", "C", Mstar_inv)
    asm.put(Vinv, "C", "U", -gp.b / gp.d * Mstar_inv @ Kmat)
    asm.put(Vinv, "U", "C", -gp.c / gp.d * Ktmat @ Mstar_inv)
    asm.put(Vinv, "U", "U", np.eye(d) / gp.d
            + gp.b * gp.c / gp.d ** 2 * Ktmat @ Mstar_inv @ Kmat)

    B0 = Scal @ V
    BD = np.stack([Scal @ A[D] @ V for D in range(d)])
    Bs = gp.k_order * gp.nu * B0 + Scal @ Acal @ V
    logger.info(f"Симметризатор собран: n={n}, N={index.N}, k={gp.k_order}")
    return SymmetrizerSet(index=index, Bc=Bc, P_proj=P_proj, E=E, A=A, Acal=Acal, V=V,
                          Vinv=Vinv, Scal=Scal, B0=B0, BD=BD, Bs=Bs, Mstar=Mstar,
                          gp=gp, kd=kd)


def _sym(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def _min_eig(matrix: np.ndarray) -> float:
    return float(scipy.linalg.eigvalsh(_sym(matrix)).min())


def pos_1b_value(n: int, b: float, d: float) -> float:
    return (4.0 * d * d - 4.0 * b * d * (n - 2) + b * b * (n * n - 3 * n + 2)) / (4.0 * (n - 1))


@dataclass
class SymmetrizerReport:
    """Отчёт проверки набора симметризаторов"""
    n: int
    B0_symmetry_defect: float
    BD_symmetry_defects: List[float]
    B0_eig_min: float
    B0_eig_max: float
    B0_bounds: Tuple[float, float]
    B0_bounds_ok: bool
    pos_1b_value: float
    pos_1b_ok: bool
    pos_2b_ok: bool
    mstar_invertible_ok: bool
    gamma_consistent: bool
    b0_symmetry_condition: float
    V_inverse_defect: float
    product_defect: float
    Bs_min_eig: float
    Bs_pd: bool
    Bc_min_positive: float
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.B0_symmetry_defect <= 1e-12
                and max(self.BD_symmetry_defects, default=0.0) <= 1e-12
                and self.B0_bounds_ok and self.pos_1b_ok and self.pos_2b_ok
                and self.mstar_invertible_ok and self.gamma_consistent
                and self.V_inverse_defect <= 1e-12 and self.product_defect <= 1e-12
                and self.Bs_pd)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["passed"] = self.passed
        return data


def verify(sym: SymmetrizerSet) -> SymmetrizerReport:
    """Проверка всех условий на собранные матрицы (только отчёт)"""
    n, gp = sym.n, sym.gp
    b, c, d = gp.b, gp.c, gp.d
    eigs = scipy.linalg.eigvalsh(_sym(sym.B0))
    bounds = (1.0 / (2.0 * n * n), 2.0 * n)

    value_1b = pos_1b_value(n, b, d)
    pos_1b_ok = value_1b > 0.0 and not np.isclose(2.0 * d, b * (n - 2))
    denom_2b = 4.0 * d * d - 4.0 * b * d * (n - 2) + b * b * (n - 1) * (n - 2)
    rhs_2b = abs(b * b * c * c / ((n - 1) * denom_2b)) if denom_2b != 0.0 else np.inf
    pos_2b_ok = c * c / (n - 1) > rhs_2b
    mstar_ok = c > abs(b * c / d) / 2.0
    gamma_ok = bool(np.isclose(gp.gamma, (n - 2) * gp.mu / 2.0 + 2.0))

    Bs_min = _min_eig(sym.Bs)
    positive = np.diag(sym.Bc)[np.diag(sym.P_proj) > 0]
    notes = []
    if not pos_1b_ok and value_1b > 0.0:
        notes.append("2d = b(n−2): граничный случай условия положительности")

    product_defect = max(
        float(np.abs(sym.B0 - sym.Scal @ sym.V).max()),
        max(float(np.abs(sym.BD[D] - sym.Scal @ sym.A[D] @ sym.V).max()) for D in range(n - 1)),
    )
    report = SymmetrizerReport(
        n=n,
        B0_symmetry_defect=float(np.abs(sym.B0 - sym.B0.T).max()),
        BD_symmetry_defects=[float(np.abs(m - m.T).max()) for m in sym.BD],
        B0_eig_min=float(eigs.min()),
        B0_eig_max=float(eigs.max()),
        B0_bounds=bounds,
        B0_bounds_ok=bool(eigs.min() >= bounds[0] and eigs.max() <= bounds[1]),
        pos_1b_value=value_1b,
        pos_1b_ok=bool(pos_1b_ok),
        pos_2b_ok=bool(pos_2b_ok),
        mstar_invertible_ok=bool(mstar_ok),
        gamma_consistent=gamma_ok,
        b0_symmetry_condition=float(abs(b * gp.p + d * gp.q - (gp.a * gp.s + c * gp.u))),
        V_inverse_defect=float(np.abs(sym.V @ sym.Vinv - np.eye(sym.N)).max()),
        product_defect=product_defect,
        Bs_min_eig=Bs_min,
        Bs_pd=Bs_min > 0.0 or (gp.k_order == 0 and Bs_min > -1e-10),
        Bc_min_positive=float(positive.min()),
        notes=notes,
    )
    log = logger.info if report.passed else logger.warning
    log(f"Проверка симметризатора n={n}: {'успешно' if report.passed else 'есть нарушения'}")
    return report


def min_k(sym: SymmetrizerSet, nu: float, cap: int = 64) -> int:
    """Наименьший порядок иерархии k ≥ 0, при котором sym(kνB⁰ + 𝒮𝒜V) строго положительно определена

    Полуопределённая sym(𝒮𝒜V) (нулевые собственные значения на ℋ и Σ)
    не принимается: при ν > 0 ответ тогда k ≥ 1.
    """
    sav = sym.SAV
    for k in range(cap + 1):
        if _min_eig(k * nu * sym.B0 + sav) > PD_MARGIN:
            return k
    raise GaugeError([f"k > {cap}: sym(kνB⁰ + 𝒮𝒜V) не положительно определена при ν = {nu}"])


@dataclass
class McPdResult:
    sufficient: bool
    actually_pd: bool
    min_eig: float


def mc_pd_check(n: int, a: float, b: float) -> McPdResult:
    """Проверка положительной определённости aI + bδ_[A^Eδ_C]Bδ_E^[Pδ^R]Q"""
    d = n - 1
    T = delta_tensors(d)
    KK = T["K"].reshape(d ** 3, d) @ T["Kt"].reshape(d, d ** 3)
    matrix = a * np.eye(d ** 3) + b * KK
    min_eig = float(scipy.linalg.eigvalsh(matrix).min())
    return McPdResult(sufficient=a > abs(b) / 2.0, actually_pd=min_eig > 0.0, min_eig=min_eig)


def _exact_equal(lhs: Tuple[np.ndarray, int], rhs: Tuple[np.ndarray, int]) -> bool:
    return bool(np.array_equal(lhs[0] * rhs[1], rhs[0] * lhs[1]))


def appendix_identities(n: int, seed: int = 0) -> Dict[str, bool]:
    """Точная (целочисленная) проверка матричных тождеств и сопряжений M3, M4"""
    d = n - 1
    num, den = integer_delta_tensors(d)
    K, Kt, S, M3, M4 = (num[k] for k in ("K", "Kt", "S", "M3", "M4"))
    eye = np.eye(d, dtype=np.int64)
    checks: Dict[str, bool] = {}

    kt_k = (np.einsum("aefg,efgp->ap", Kt, K), den["Kt"] * den["K"])
    checks["dd-1"] = _exact_equal(kt_k, ((n - 2) * eye, 2))

    k_kt = (np.einsum("abce,epqr->abcpqr", K, Kt), den["K"] * den["Kt"])
    dd2 = (np.einsum("ap,bc,qr->abcpqr", eye, eye, eye) - np.einsum("ar,bc,pq->abcpqr", eye, eye, eye)
           - np.einsum("cp,ab,qr->abcpqr", eye, eye, eye) + np.einsum("cr,ab,pq->abcpqr", eye, eye, eye))
    checks["dd-2"] = _exact_equal(k_kt, (dd2, 4))

    # δ^{D⟨P}δ_A^{Q⟩} = S[D,A,P,Q]
    kt_m3 = (np.einsum("aijk,dijkpq->dapq", Kt, M3), den["Kt"] * den["M3"])
    checks["d-pi1"] = _exact_equal(kt_m3, (-S, 2 * den["S"]))
    kt_m4 = (np.einsum("aijk,dijkpq->dapq", Kt, M4), den["Kt"] * den["M4"])
    checks["d-pi2"] = _exact_equal(kt_m4, ((n - 2) * S, 2 * den["S"]))

    kkt_m3 = (np.einsum("abcijk,dijkpq->dabcpq", k_kt[0], M3), k_kt[1] * den["M3"])
    checks["dd-pi1"] = _exact_equal(kkt_m3, (-M4, 2 * den["M4"]))
    kkt_m4 = (np.einsum("abcijk,dijkpq->dabcpq", k_kt[0], M4), k_kt[1] * den["M4"])
    checks["dd-pi2"] = _exact_equal(kkt_m4, ((n - 2) * M4, 2 * den["M4"]))

    # сопряжённые: δ^{D[P}δ_⟨A^{R]}δ_B⟩^Q и δ_⟨A^Dδ_B⟩^{[P}δ^{R]Q}
    m3_adj = (np.einsum("dp,abrq->dpqrab", eye, S) - np.einsum("dr,abpq->dpqrab", eye, S), 2 * den["S"])
    m4_adj = (d * (np.einsum("ad,bpqr->dpqrab", eye, Kt) + np.einsum("bd,apqr->dpqrab", eye, Kt))
              - 2 * np.einsum("ab,dpqr->dpqrab", eye, Kt), 2 * d * den["Kt"])
    # транспонирование меняет местами группы (ABC) и (PQ): M[D,PQR,AB] = M[D,ABC,PQ] с переименованием
    checks["M3-adj"] = _exact_equal((M3, den["M3"]), m3_adj)
    checks["M4-adj"] = _exact_equal((M4, den["M4"]), m4_adj)

    rng = np.random.default_rng(seed)
    for name, adjoint in (("M3", m3_adj), ("M4", m4_adj)):
        tensor = num[name]
        ok = True
        for D in range(d):
            x = rng.integers(-9, 10, size=(d, d))
            y = rng.integers(-9, 10, size=(d, d, d))
            lhs = int(np.einsum("abcpq,pq,abc->", tensor[D], x, y))
            rhs = int(np.einsum("pqrab,pqr,ab->", adjoint[0][D], y, x))
            ok = ok and lhs * adjoint[1] == rhs * den[name]
        checks[f"{name}-pairing"] = ok
    return checks


def export_matrix_market(matrix: np.ndarray, path: Path, comment: str = "") -> None:
    """Выгрузка матрицы в текстовом формате Matrix Market"""
    scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(matrix), comment=comment)
