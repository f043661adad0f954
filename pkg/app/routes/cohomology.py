from fastapi import APIRouter

from app.schemas import (
    HermitianClass,
    HirzebruchCertificate,
    HirzebruchClass,
    KahlerVerdict,
    KahlerVerdictRequest,
    PnVerdict,
    PnVerdictRequest,
    TorusCertificate,
)
from app.services import hirz_classify, kahler_verdict, pn_verdict, torus_certificate

router = APIRouter(tags=["Cohomology"], prefix="/api/cohomology")

@router.post("/pn/verdict", response_model=PnVerdict)
def pn_verdict_endpoint(request: PnVerdictRequest):
    """
    Self-intersection test for a diffuse foliated cycle on P^n
    """
    return pn_verdict(request.n, request.q, request.mass)

@router.post("/kahler/verdict", response_model=KahlerVerdict)
def kahler_verdict_endpoint(request: KahlerVerdictRequest):
    return kahler_verdict(request.n, request.q, request.h_pp, request.mass)

@router.post("/hirzebruch/classify", response_model=HirzebruchCertificate)
def hirzebruch_endpoint(probe: HirzebruchClass):
    """
    Classify a probe class aF + bC on the Hirzebruch surface Sigma_n
    """
    return hirz_classify(probe.n, probe.a, probe.b)

@router.post("/torus", response_model=TorusCertificate)
def torus_endpoint(h: HermitianClass):
    """
    Vanishing-square certificate for a (1,1)-class on a complex torus
    """
    return torus_certificate(h)
