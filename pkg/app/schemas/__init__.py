from app.schemas.cycle import DiagonalMassPoint, DiagonalMassCurve, FamilyCheck
from app.schemas.density import (
    DecayRow,
    DecayReport,
    InequalityFit,
    FarStratumCheck,
    LelongEstimate,
    HDimensionResult
)
from app.schemas.cohomology import (
    ComplexPair,
    PnClass,
    PnVerdictRequest,
    PnVerdict,
    KahlerVerdictRequest,
    KahlerVerdict,
    SurfaceLeafVerdict,
    HirzebruchClass,
    HirzebruchCertificate,
    HermitianClass,
    Rank1Result,
    TorusCertificate
)
from app.schemas.scenarios import (
    TransversalSpec,
    MeasureSpec,
    ScenarioSpec,
    ScenarioSummary,
    AhlforsRow
)
from app.schemas.runs import (
    RunConfig,
    RunCreate,
    AssertionResult,
    RunReport,
    DecayRowDisplay,
    RunDisplay,
    RunWithRows
)
